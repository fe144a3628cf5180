//! Turns per-agent requests into station-wide power flows.
//!
//! Each charger's signed power is first made feasible for its battery. Charge
//! demand is then served from PV, from other EVs (V2V) and finally from the
//! grid; discharge goes to other EVs first and the rest is exported. PV left
//! over is exported too. If either grid direction exceeds the connection limit
//! the grid flows on that side are scaled down and the excess is reported.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::station::{clamp_feasible, ChargerState, StationConfig};

/// Tolerance used by [`verify_flows`], kW.
pub const FLOW_TOLERANCE_KW: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("{actions} actions for {chargers} chargers")]
    Arity { actions: usize, chargers: usize },
    #[error("non-finite action on charger {charger}")]
    NonFiniteAction { charger: usize },
    #[error("non-finite exogenous input: {0}")]
    NonFiniteExogenous(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentAction {
    /// Positive charges, negative discharges, kW.
    pub p_signed: f64,
    pub v2v_request: f64,
    pub pv_request: f64,
}

impl AgentAction {
    pub const ZERO: AgentAction = AgentAction {
        p_signed: 0.0,
        v2v_request: 0.0,
        pv_request: 0.0,
    };

    pub fn new(p_signed: f64, v2v_request: f64, pv_request: f64) -> Self {
        Self {
            p_signed,
            v2v_request,
            pv_request,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p_signed.is_finite() && self.v2v_request.is_finite() && self.pv_request.is_finite()
    }

    /// Projects onto the action box.
    pub fn clamped(&self, cfg: &StationConfig) -> Self {
        Self {
            p_signed: self.p_signed.clamp(-cfg.p_disch_max, cfg.p_ch_max),
            v2v_request: self.v2v_request.clamp(0.0, 1.0),
            pv_request: self.pv_request.clamp(0.0, 1.0),
        }
    }
}

/// Prices and PV output for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExogenousStep {
    pub kappa_buy: f64,
    pub kappa_sell: f64,
    pub kappa_v2v: f64,
    /// kW
    pub pv_gen: f64,
}

impl ExogenousStep {
    /// V2V settles at the midpoint of the buy and sell prices.
    pub fn new(kappa_buy: f64, kappa_sell: f64, pv_gen: f64) -> Self {
        Self {
            kappa_buy,
            kappa_sell,
            kappa_v2v: 0.5 * (kappa_buy + kappa_sell),
            pv_gen,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.kappa_buy, self.kappa_sell, self.kappa_v2v, self.pv_gen];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if self.kappa_sell < 0.0 || self.kappa_buy < 0.0 {
            return Err("negative price".into());
        }
        if !(self.kappa_sell <= self.kappa_v2v && self.kappa_v2v <= self.kappa_buy) {
            return Err(format!(
                "prices must satisfy sell <= v2v <= buy (sell={}, v2v={}, buy={})",
                self.kappa_sell, self.kappa_v2v, self.kappa_buy
            ));
        }
        if self.pv_gen < 0.0 {
            return Err("negative PV generation".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChargerFlows {
    pub p_ch: f64,
    pub p_disch: f64,
    pub p_pvev: f64,
    pub p_v2v_c: f64,
    pub p_v2v_d: f64,
    pub p_g2v: f64,
    pub p_v2g: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerFlows {
    pub chargers: Vec<ChargerFlows>,
    /// PV exported to the grid, kW.
    pub p_pvg: f64,
    /// Excess over the grid limit before clipping, summed over both directions, kW.
    pub grid_violation: f64,
}

impl PowerFlows {
    pub fn zero(n: usize) -> Self {
        Self {
            chargers: vec![ChargerFlows::default(); n],
            p_pvg: 0.0,
            grid_violation: 0.0,
        }
    }

    pub fn total_g2v(&self) -> f64 {
        self.chargers.iter().map(|c| c.p_g2v).sum()
    }

    pub fn total_v2g(&self) -> f64 {
        self.chargers.iter().map(|c| c.p_v2g).sum()
    }

    pub fn total_pvev(&self) -> f64 {
        self.chargers.iter().map(|c| c.p_pvev).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AllocationOrder {
    #[default]
    PvFirst,
    V2vFirst,
}

/// How a scarce supply is shared among requesters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ShareBasis {
    /// In proportion to requested power.
    #[default]
    RequestedPower,
    /// In proportion to request fraction times battery energy headroom,
    /// capped at the requested power.
    EnergyHeadroom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AllocationOptions {
    pub order: AllocationOrder,
    pub basis: ShareBasis,
}

/// Splits `supply` among requesters capped at `caps`, by `weights`.
///
/// Capacity freed by saturated requesters is redistributed, so the result is
/// monotone in `supply`. Zero total weight falls back to weighting by cap.
fn water_fill(supply: f64, caps: &[f64], weights: &[f64]) -> Vec<f64> {
    let total: f64 = caps.iter().sum();
    if total <= supply {
        return caps.to_vec();
    }
    let mut grants = vec![0.0; caps.len()];
    let mut active: Vec<usize> = (0..caps.len()).filter(|&j| caps[j] > 0.0).collect();
    let weight_sum: f64 = active.iter().map(|&j| weights[j]).sum();
    let w: Vec<f64> = if weight_sum > 0.0 {
        weights.to_vec()
    } else {
        caps.to_vec()
    };
    active.retain(|&j| w[j] > 0.0);
    let mut remaining = supply.max(0.0);
    while !active.is_empty() && remaining > 0.0 {
        let wsum: f64 = active.iter().map(|&j| w[j]).sum();
        let saturated: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| remaining * w[j] / wsum >= caps[j])
            .collect();
        if saturated.is_empty() {
            for &j in &active {
                grants[j] = remaining * w[j] / wsum;
            }
            break;
        }
        for &j in &saturated {
            grants[j] = caps[j];
            remaining -= caps[j];
        }
        active.retain(|j| !saturated.contains(j));
    }
    grants
}

fn headroom_up(state: &ChargerState) -> f64 {
    state
        .session
        .map(|s| (s.e_max - state.energy).max(0.0))
        .unwrap_or(0.0)
}

fn headroom_down(state: &ChargerState) -> f64 {
    state
        .session
        .map(|s| (state.energy - s.e_min).max(0.0))
        .unwrap_or(0.0)
}

fn share(
    supply: f64,
    caps: &[f64],
    fractions: &[f64],
    headroom: &[f64],
    basis: ShareBasis,
) -> Vec<f64> {
    match basis {
        ShareBasis::RequestedPower => water_fill(supply, caps, caps),
        ShareBasis::EnergyHeadroom => {
            let w: Vec<f64> = (0..caps.len())
                .map(|j| if caps[j] > 0.0 { fractions[j] * headroom[j] } else { 0.0 })
                .collect();
            water_fill(supply, caps, &w)
        }
    }
}

/// Resolves one step of station power flows.
pub fn allocate(
    actions: &[AgentAction],
    states: &[ChargerState],
    ex: &ExogenousStep,
    cfg: &StationConfig,
    opts: &AllocationOptions,
) -> Result<PowerFlows, DispatchError> {
    let n = states.len();
    if actions.len() != n {
        return Err(DispatchError::Arity {
            actions: actions.len(),
            chargers: n,
        });
    }
    if let Some(j) = actions.iter().position(|a| !a.is_finite()) {
        return Err(DispatchError::NonFiniteAction { charger: j });
    }
    if !ex.pv_gen.is_finite() {
        return Err(DispatchError::NonFiniteExogenous("pv_gen"));
    }
    let pv_gen = ex.pv_gen.max(0.0);

    let acts: Vec<AgentAction> = actions.iter().map(|a| a.clamped(cfg)).collect();
    let mut ch = Vec::with_capacity(n);
    let mut disch = Vec::with_capacity(n);
    for (a, s) in acts.iter().zip(states) {
        let (c, d) = clamp_feasible(s, a.p_signed.max(0.0), (-a.p_signed).max(0.0), cfg);
        ch.push(c);
        disch.push(d);
    }
    let pv_frac: Vec<f64> = acts.iter().map(|a| a.pv_request).collect();
    let v2v_frac: Vec<f64> = acts.iter().map(|a| a.v2v_request).collect();
    let up: Vec<f64> = states.iter().map(headroom_up).collect();
    let down: Vec<f64> = states.iter().map(headroom_down).collect();

    let mut pvev = vec![0.0; n];
    let mut v2vc = vec![0.0; n];
    let mut v2vd = vec![0.0; n];

    let pv_step = |served: &[f64], pvev: &mut Vec<f64>| {
        let req: Vec<f64> = (0..n).map(|j| pv_frac[j] * (ch[j] - served[j])).collect();
        *pvev = share(pv_gen, &req, &pv_frac, &up, opts.basis);
    };
    let v2v_step = |served: &[f64], v2vc: &mut Vec<f64>, v2vd: &mut Vec<f64>| {
        let consume: Vec<f64> = (0..n).map(|j| v2v_frac[j] * (ch[j] - served[j])).collect();
        let offer: Vec<f64> = (0..n).map(|j| v2v_frac[j] * disch[j]).collect();
        let c_total: f64 = consume.iter().sum();
        let o_total: f64 = offer.iter().sum();
        if c_total <= 0.0 || o_total <= 0.0 {
            return;
        }
        *v2vc = share(o_total, &consume, &v2v_frac, &up, opts.basis);
        let matched: f64 = v2vc.iter().sum();
        *v2vd = share(matched, &offer, &v2v_frac, &down, opts.basis);
    };
    match opts.order {
        AllocationOrder::PvFirst => {
            pv_step(&vec![0.0; n], &mut pvev);
            v2v_step(&pvev, &mut v2vc, &mut v2vd);
        }
        AllocationOrder::V2vFirst => {
            v2v_step(&vec![0.0; n], &mut v2vc, &mut v2vd);
            pv_step(&v2vc, &mut pvev);
        }
    }

    let mut flows = PowerFlows::zero(n);
    for j in 0..n {
        let f = &mut flows.chargers[j];
        f.p_pvev = pvev[j];
        f.p_v2v_c = v2vc[j];
        f.p_v2v_d = v2vd[j];
        f.p_g2v = ((ch[j] - pvev[j]) - v2vc[j]).max(0.0);
        f.p_v2g = (disch[j] - v2vd[j]).max(0.0);
    }
    flows.p_pvg = (pv_gen - flows.total_pvev()).max(0.0);

    let import = flows.total_g2v();
    if import > cfg.g_max {
        flows.grid_violation += import - cfg.g_max;
        let k = cfg.g_max / import;
        for f in &mut flows.chargers {
            f.p_g2v *= k;
        }
    }
    let export = flows.total_v2g() + flows.p_pvg;
    if export > cfg.g_max {
        flows.grid_violation += export - cfg.g_max;
        let k = cfg.g_max / export;
        for f in &mut flows.chargers {
            f.p_v2g *= k;
        }
        flows.p_pvg *= k;
    }
    for f in &mut flows.chargers {
        f.p_ch = f.p_pvev + f.p_v2v_c + f.p_g2v;
        f.p_disch = f.p_v2g + f.p_v2v_d;
    }
    Ok(flows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    ChargeLimit,
    DischargeLimit,
    SimultaneousFlow,
    ChargeBalance,
    DischargeBalance,
    NonNegativity,
    PvGeneration,
    GridImport,
    GridExport,
    V2vBalance,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::ChargeLimit => "charge power limit",
            Constraint::DischargeLimit => "discharge power limit",
            Constraint::SimultaneousFlow => "no simultaneous charge and discharge",
            Constraint::ChargeBalance => "charge balance",
            Constraint::DischargeBalance => "discharge balance",
            Constraint::NonNegativity => "non-negative flows",
            Constraint::PvGeneration => "PV generation limit",
            Constraint::GridImport => "grid import limit",
            Constraint::GridExport => "grid export limit",
            Constraint::V2vBalance => "V2V balance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub charger: Option<usize>,
    /// Amount by which the constraint is broken, kW.
    pub excess: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.charger {
            Some(j) => write!(f, "{} violated on charger {j} by {:e} kW", self.constraint.name(), self.excess),
            None => write!(f, "{} violated by {:e} kW", self.constraint.name(), self.excess),
        }
    }
}

/// Independent check of every flow constraint; empty means all hold.
pub fn verify_flows(flows: &PowerFlows, ex: &ExogenousStep, cfg: &StationConfig) -> Vec<Violation> {
    let tol = FLOW_TOLERANCE_KW;
    let mut out = Vec::new();
    let mut check = |constraint, charger, excess: f64| {
        if excess.is_nan() || excess > tol {
            out.push(Violation {
                constraint,
                charger,
                excess,
            });
        }
    };
    for (j, f) in flows.chargers.iter().enumerate() {
        let parts = [f.p_ch, f.p_disch, f.p_pvev, f.p_v2v_c, f.p_v2v_d, f.p_g2v, f.p_v2g];
        let most_negative = parts.iter().fold(0.0f64, |m, &v| m.max(-v));
        check(Constraint::NonNegativity, Some(j), if parts.iter().any(|v| v.is_nan()) { f64::NAN } else { most_negative });
        check(Constraint::ChargeLimit, Some(j), f.p_ch - cfg.p_ch_max);
        check(Constraint::DischargeLimit, Some(j), f.p_disch - cfg.p_disch_max);
        check(Constraint::SimultaneousFlow, Some(j), f.p_ch.min(f.p_disch));
        check(Constraint::ChargeBalance, Some(j), (f.p_ch - (f.p_pvev + f.p_v2v_c + f.p_g2v)).abs());
        check(Constraint::DischargeBalance, Some(j), (f.p_disch - (f.p_v2g + f.p_v2v_d)).abs());
    }
    check(Constraint::NonNegativity, None, -flows.p_pvg);
    let consumed: f64 = flows.chargers.iter().map(|f| f.p_v2v_c).sum();
    let produced: f64 = flows.chargers.iter().map(|f| f.p_v2v_d).sum();
    check(Constraint::V2vBalance, None, (consumed - produced).abs());
    check(Constraint::PvGeneration, None, flows.total_pvev() + flows.p_pvg - ex.pv_gen);
    check(Constraint::GridImport, None, flows.total_g2v() - cfg.g_max);
    check(Constraint::GridExport, None, flows.total_v2g() + flows.p_pvg - cfg.g_max);
    out
}
