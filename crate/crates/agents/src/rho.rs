//! Rolling-horizon optimization.
//!
//! At each decision point a linear program schedules every plugged-in EV
//! over a look-ahead window of forecast prices and PV, and only the first
//! step of the schedule is executed. Demand at departure (or its pro-rated
//! share at the window end) is a hard target; when no schedule can meet it
//! the target becomes a penalized soft constraint.

use serde::{Deserialize, Serialize};
use voltmesh_core::{AgentAction, ChargerState, Controller, ExogenousStep, Scenario, StationConfig, StationView};
use voltmesh_lp::{solve, LinearProgram, LpOutcome, Sense};

use crate::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhoWindow {
    /// The longest stay in the scenario.
    LongestParking,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Forecast {
    Perfect,
    /// Same step of the previous day; true values on the first day.
    Persistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhoTrigger {
    EveryStep,
    /// Re-solve only when the set of plugged-in EVs changes.
    OnArrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoConfig {
    pub window: RhoWindow,
    pub forecast: Forecast,
    pub trigger: RhoTrigger,
    /// Weight of unmet demand relative to the highest buy price.
    pub rho: f64,
}

impl Default for RhoConfig {
    fn default() -> Self {
        Self {
            window: RhoWindow::LongestParking,
            forecast: Forecast::Perfect,
            trigger: RhoTrigger::EveryStep,
            rho: 1.0,
        }
    }
}

impl RhoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.window == RhoWindow::Fixed(0) {
            return Err(AgentError::InvalidConfig("fixed window must be at least 1 step".into()));
        }
        if self.rho.is_nan() || self.rho < 0.0 {
            return Err(AgentError::InvalidConfig("rho must be non-negative".into()));
        }
        Ok(())
    }

    pub fn window_len(&self, scenario: &Scenario) -> usize {
        match self.window {
            RhoWindow::LongestParking => scenario.sessions.iter().map(|s| s.stay_steps()).max().unwrap_or(1).max(1),
            RhoWindow::Fixed(k) => k,
        }
    }
}

/// Exogenous values assumed for steps `t..t + len` when deciding at `t`.
///
/// The current step is always observed exactly.
pub fn forecast_window(scenario: &Scenario, t: usize, len: usize, mode: Forecast) -> Vec<ExogenousStep> {
    let ex = &scenario.exogenous;
    let end = (t + len).min(ex.len());
    let day = (24.0 / scenario.config.delta_t).round() as usize;
    (t..end)
        .map(|s| match mode {
            Forecast::Perfect => ex[s],
            Forecast::Persistence => {
                if s == t || day == 0 {
                    return ex[s];
                }
                let days_back = (s - t).div_ceil(day);
                match s.checked_sub(days_back * day) {
                    Some(past) => ex[past],
                    None => ex[s],
                }
            }
        })
        .collect()
}

/// Planned actions, `actions[k][j]` for window step `k` and charger `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoPlan {
    pub actions: Vec<Vec<AgentAction>>,
    /// Planned window cost including any unmet-demand penalty.
    pub objective: f64,
    /// True when the demand targets had to be relaxed.
    pub relaxed: bool,
    pub lp_iterations: usize,
}

const PVEV: usize = 0;
const V2VC: usize = 1;
const G2V: usize = 2;
const V2G: usize = 3;
const V2VD: usize = 4;
const ENERGY: usize = 5;
const PER_STEP: usize = 6;

struct Ev {
    charger: usize,
    steps: usize,
    base: usize,
    e0: f64,
    target: f64,
    slack: Option<usize>,
}

impl Ev {
    fn var(&self, k: usize, field: usize) -> usize {
        self.base + PER_STEP * k + field
    }
}

/// Schedules the plugged-in EVs over `forecast` and returns the plan.
///
/// `unmet_penalty` prices each kWh of missed target when the targets cannot
/// all be met.
pub fn rho_plan(
    chargers: &[ChargerState],
    forecast: &[ExogenousStep],
    station: &StationConfig,
    unmet_penalty: f64,
) -> Result<RhoPlan, AgentError> {
    match build_and_solve(chargers, forecast, station, None)? {
        Some(plan) => Ok(plan),
        None => build_and_solve(chargers, forecast, station, Some(unmet_penalty))?
            .ok_or_else(|| AgentError::InvalidConfig("window program infeasible even with soft demand".into())),
    }
}

fn build_and_solve(
    chargers: &[ChargerState],
    forecast: &[ExogenousStep],
    station: &StationConfig,
    soft: Option<f64>,
) -> Result<Option<RhoPlan>, AgentError> {
    let w = forecast.len();
    let n = chargers.len();
    let dt = station.delta_t;

    let mut evs = Vec::new();
    let mut n_vars = 0;
    for (j, c) in chargers.iter().enumerate() {
        let Some(s) = &c.session else { continue };
        let steps = c.remaining_steps.min(w);
        if steps == 0 {
            continue;
        }
        let share = steps as f64 / c.remaining_steps as f64;
        let target = c.energy + (s.e_demand - c.energy) * share;
        evs.push(Ev { charger: j, steps, base: n_vars, e0: c.energy, target, slack: None });
        n_vars += PER_STEP * steps;
    }
    if soft.is_some() {
        for ev in evs.iter_mut() {
            ev.slack = Some(n_vars);
            n_vars += 1;
        }
    }

    let mut plan = RhoPlan {
        actions: vec![vec![AgentAction::ZERO; n]; w],
        objective: 0.0,
        relaxed: soft.is_some(),
        lp_iterations: 0,
    };
    if evs.is_empty() {
        return Ok(Some(plan));
    }

    let mut lp = LinearProgram::new(n_vars);
    let present: Vec<usize> = (0..w).map(|k| evs.iter().filter(|e| e.steps > k).count()).collect();
    for ev in &evs {
        let s = chargers[ev.charger].session.as_ref().expect("present EV has a session");
        let wear = s.kappa_batt / s.l_cyc * 0.5 / s.e_cap;
        let wear_ch = wear * s.eta_ch * dt;
        let wear_dis = wear * dt / s.eta_disch;
        for k in 0..ev.steps {
            let ex = &forecast[k];
            lp.set_objective(ev.var(k, PVEV), ex.kappa_sell * dt + wear_ch);
            lp.set_objective(ev.var(k, V2VC), wear_ch);
            lp.set_objective(ev.var(k, G2V), ex.kappa_buy * dt + wear_ch);
            lp.set_objective(ev.var(k, V2G), -ex.kappa_sell * dt + wear_dis);
            lp.set_objective(ev.var(k, V2VD), wear_dis);
            lp.set_bounds(ev.var(k, ENERGY), s.e_min, s.e_max);
            if present[k] < 2 {
                lp.set_bounds(ev.var(k, V2VC), 0.0, 0.0);
                lp.set_bounds(ev.var(k, V2VD), 0.0, 0.0);
            }
            lp.add_constraint(
                &[(ev.var(k, PVEV), 1.0), (ev.var(k, V2VC), 1.0), (ev.var(k, G2V), 1.0)],
                Sense::Le,
                station.p_ch_max,
            );
            lp.add_constraint(&[(ev.var(k, V2G), 1.0), (ev.var(k, V2VD), 1.0)], Sense::Le, station.p_disch_max);
            let gain = s.eta_ch * dt;
            let loss = dt / s.eta_disch;
            let mut row = vec![
                (ev.var(k, ENERGY), 1.0),
                (ev.var(k, PVEV), -gain),
                (ev.var(k, V2VC), -gain),
                (ev.var(k, G2V), -gain),
                (ev.var(k, V2G), loss),
                (ev.var(k, V2VD), loss),
            ];
            let rhs = if k == 0 {
                ev.e0
            } else {
                row.push((ev.var(k - 1, ENERGY), -1.0));
                0.0
            };
            lp.add_constraint(&row, Sense::Eq, rhs);
        }
        let mut row = vec![(ev.var(ev.steps - 1, ENERGY), 1.0)];
        if let (Some(slack), Some(penalty)) = (ev.slack, soft) {
            row.push((slack, 1.0));
            lp.set_objective(slack, penalty);
        }
        lp.add_constraint(&row, Sense::Ge, ev.target);
    }
    let import_can_bind = n as f64 * station.p_ch_max > station.g_max;
    for k in 0..w {
        if present[k] == 0 {
            continue;
        }
        let active: Vec<&Ev> = evs.iter().filter(|e| e.steps > k).collect();
        let ex = &forecast[k];
        let pv: Vec<(usize, f64)> = active.iter().map(|e| (e.var(k, PVEV), 1.0)).collect();
        lp.add_constraint(&pv, Sense::Le, ex.pv_gen.max(0.0));
        if present[k] >= 2 {
            let mut v2v: Vec<(usize, f64)> = active.iter().map(|e| (e.var(k, V2VC), 1.0)).collect();
            v2v.extend(active.iter().map(|e| (e.var(k, V2VD), -1.0)));
            lp.add_constraint(&v2v, Sense::Eq, 0.0);
        }
        if import_can_bind {
            let g: Vec<(usize, f64)> = active.iter().map(|e| (e.var(k, G2V), 1.0)).collect();
            lp.add_constraint(&g, Sense::Le, station.g_max);
        }
        // PV not taken by EVs is sold, so export is v2g plus the PV remainder.
        if n as f64 * station.p_disch_max + ex.pv_gen > station.g_max {
            let mut e: Vec<(usize, f64)> = active.iter().map(|e| (e.var(k, V2G), 1.0)).collect();
            e.extend(active.iter().map(|e| (e.var(k, PVEV), -1.0)));
            lp.add_constraint(&e, Sense::Le, station.g_max - ex.pv_gen.max(0.0));
        }
    }

    let sol = match solve(&lp)? {
        LpOutcome::Optimal(sol) => sol,
        LpOutcome::Infeasible => return Ok(None),
        LpOutcome::Unbounded => {
            return Err(AgentError::InvalidConfig("window program is unbounded".into()));
        }
    };
    plan.objective = sol.objective - forecast.iter().map(|e| e.kappa_sell * e.pv_gen.max(0.0) * dt).sum::<f64>();
    plan.lp_iterations = sol.iterations;
    let x = |i: usize| {
        let v = sol.x[i];
        if v.abs() < 1e-9 {
            0.0
        } else {
            v
        }
    };
    for ev in &evs {
        for k in 0..ev.steps {
            let pvev = x(ev.var(k, PVEV));
            let v2vc = x(ev.var(k, V2VC));
            let ch = pvev + v2vc + x(ev.var(k, G2V));
            let v2vd = x(ev.var(k, V2VD));
            let dis = x(ev.var(k, V2G)) + v2vd;
            let p = ch - dis;
            let frac = |part: f64, whole: f64| if whole > 1e-9 { (part / whole).clamp(0.0, 1.0) } else { 0.0 };
            let (v2v_request, pv_request) = if p >= 0.0 {
                (frac(v2vc, ch - pvev), frac(pvev, ch))
            } else {
                (frac(v2vd, dis), 0.0)
            };
            plan.actions[k][ev.charger] = AgentAction::new(p, v2v_request, pv_request);
        }
    }
    Ok(Some(plan))
}

/// Centralized rolling-horizon controller. It reads the true station state
/// and the scenario's price and PV series through its forecast.
#[derive(Debug, Clone)]
pub struct RhoController {
    pub config: RhoConfig,
    cached: Option<Cached>,
    pub solves: usize,
    pub relaxed_solves: usize,
}

#[derive(Debug, Clone)]
struct Cached {
    start: usize,
    sessions: Vec<Option<u64>>,
    plan: RhoPlan,
}

impl RhoController {
    pub fn new(config: RhoConfig) -> Self {
        Self { config, cached: None, solves: 0, relaxed_solves: 0 }
    }

    fn plan_for(&mut self, view: &StationView<'_>) -> Result<Vec<AgentAction>, AgentError> {
        let t = view.step;
        let sessions: Vec<Option<u64>> = view.chargers.iter().map(|c| c.session.map(|s| s.id)).collect();
        if self.config.trigger == RhoTrigger::OnArrival {
            if let Some(c) = &self.cached {
                let k = t - c.start;
                if c.sessions == sessions && k < c.plan.actions.len() {
                    return Ok(c.plan.actions[k].clone());
                }
            }
        }
        let sc = view.scenario;
        let len = self.config.window_len(sc);
        let forecast = forecast_window(sc, t, len, self.config.forecast);
        let k_buy_max = sc.exogenous.iter().map(|e| e.kappa_buy).fold(0.0, f64::max);
        let plan = rho_plan(view.chargers, &forecast, &sc.config, self.config.rho * k_buy_max)?;
        self.solves += 1;
        if plan.relaxed {
            self.relaxed_solves += 1;
        }
        let first = plan.actions.first().cloned().unwrap_or_else(|| vec![AgentAction::ZERO; view.chargers.len()]);
        self.cached = Some(Cached { start: t, sessions, plan });
        Ok(first)
    }
}

impl Controller for RhoController {
    fn act(&mut self, view: &StationView<'_>) -> Vec<AgentAction> {
        self.plan_for(view).expect("window program solves")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use voltmesh_core::{
        allocate, rollout, verify_flows, AllocationOptions, BatteryDefaults, ChargerSession, EngineOptions,
    };

    fn ev(charger: usize, dep: usize, demand: f64, init: f64) -> ChargerState {
        ChargerState::plugged(ChargerSession::with_defaults(
            charger as u64,
            charger,
            0,
            dep,
            demand,
            init,
            40.0,
            &BatteryDefaults::default(),
        ))
    }

    fn station(n: usize) -> StationConfig {
        StationConfig { n_chargers: n, ..Default::default() }
    }

    #[test]
    fn zero_demand_gives_zero_plan() {
        let chargers = vec![ev(0, 4, 10.0, 10.0), ChargerState::empty()];
        let fc = vec![ExogenousStep::new(0.3, 0.1, 5.0); 4];
        let plan = rho_plan(&chargers, &fc, &station(2), 0.3).unwrap();
        assert!(plan.actions.iter().flatten().all(|a| a.p_signed == 0.0));
        // The only cash flow is selling all PV.
        assert!((plan.objective + 4.0 * 0.1 * 5.0 * 0.25).abs() < 1e-9);
        assert!(!plan.relaxed);
    }

    #[test]
    fn pv_surplus_means_no_grid_purchase() {
        let chargers = vec![ev(0, 4, 20.0, 10.0), ev(1, 4, 15.0, 10.0)];
        let fc = vec![ExogenousStep::new(0.3, 0.05, 30.0); 4];
        let cfg = station(2);
        let plan = rho_plan(&chargers, &fc, &cfg, 0.3).unwrap();
        let flows = allocate(
            &plan.actions[0],
            &chargers,
            &fc[0],
            &cfg,
            &AllocationOptions::default(),
        )
        .unwrap();
        assert!(verify_flows(&flows, &fc[0], &cfg).is_empty());
        assert!(flows.total_g2v() < 1e-9, "grid import {}", flows.total_g2v());
        assert!(flows.total_pvev() > 0.0);
    }

    #[test]
    fn unreachable_demand_is_relaxed() {
        // 2 steps at 16 kW add at most 7.6 kWh.
        let chargers = vec![ev(0, 2, 30.0, 10.0)];
        let fc = vec![ExogenousStep::new(0.2, 0.1, 0.0); 2];
        let plan = rho_plan(&chargers, &fc, &station(1), 1.0).unwrap();
        assert!(plan.relaxed);
        assert!(plan.actions.iter().all(|a| (a[0].p_signed - 16.0).abs() < 1e-9));
    }

    #[test]
    fn persistence_uses_previous_day() {
        let mut sc = Scenario {
            config: StationConfig { n_chargers: 1, delta_t: 6.0, ..Default::default() },
            exogenous: (0..12).map(|i| ExogenousStep::new(i as f64, 0.0, 0.0)).collect(),
            sessions: vec![],
        };
        sc.config.delta_t = 6.0;
        let buy = |v: Vec<ExogenousStep>| v.iter().map(|e| e.kappa_buy).collect::<Vec<_>>();
        assert_eq!(buy(forecast_window(&sc, 5, 3, Forecast::Persistence)), vec![5.0, 2.0, 3.0]);
        assert_eq!(buy(forecast_window(&sc, 1, 3, Forecast::Persistence)), vec![1.0, 2.0, 3.0]);
        assert_eq!(buy(forecast_window(&sc, 5, 6, Forecast::Persistence)), vec![5.0, 2.0, 3.0, 4.0, 5.0, 2.0]);
        assert_eq!(buy(forecast_window(&sc, 10, 5, Forecast::Perfect)), vec![10.0, 11.0]);
    }

    /// Cheapest schedule over 4 kW power levels, by brute force.
    fn exhaustive(buy: &[f64], sell: f64, e0: f64, demand: f64) -> (Vec<f64>, f64) {
        let levels: Vec<f64> = (-4..=4).map(|i| i as f64 * 4.0).collect();
        let d = BatteryDefaults::default();
        let wear = d.kappa_batt / d.l_cyc * 0.5 / 40.0;
        let mut best = (vec![], f64::INFINITY);
        let mut idx = vec![0usize; buy.len()];
        loop {
            let p: Vec<f64> = idx.iter().map(|&i| levels[i]).collect();
            let (mut e, mut cost, mut ok) = (e0, 0.0, true);
            for (k, &pk) in p.iter().enumerate() {
                if pk >= 0.0 {
                    e += pk * 0.95 * 0.25;
                    cost += pk * 0.25 * buy[k] + wear * pk * 0.95 * 0.25;
                } else {
                    e += pk * 0.25 / 0.95;
                    cost += pk * 0.25 * sell + wear * -pk * 0.25 / 0.95;
                }
                ok &= (0.0..=40.0).contains(&e);
            }
            if ok && e >= demand - 1e-9 && cost < best.1 - 1e-12 {
                best = (p, cost);
            }
            let mut pos = 0;
            while pos < idx.len() && idx[pos] == levels.len() - 1 {
                idx[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                return best;
            }
            idx[pos] += 1;
        }
    }

    #[test]
    fn price_valley_matches_exhaustive_search() {
        let buy = [0.4, 0.1, 0.4, 0.1];
        let (oracle, _) = exhaustive(&buy, 0.05, 10.0, 17.6);
        assert_eq!(oracle, vec![0.0, 16.0, 0.0, 16.0]);

        let s = ChargerSession::with_defaults(0, 0, 0, 4, 17.6, 10.0, 40.0, &BatteryDefaults::default());
        let sc = Scenario {
            config: station(1),
            exogenous: buy.iter().map(|&b| ExogenousStep::new(b, 0.05, 0.0)).collect(),
            sessions: vec![s],
        };
        for trigger in [RhoTrigger::EveryStep, RhoTrigger::OnArrival] {
            let mut ctl = RhoController::new(RhoConfig { trigger, ..Default::default() });
            let trace = rollout(&sc, &mut ctl, None, 0, &EngineOptions::default()).unwrap();
            let executed: Vec<f64> = trace.steps.iter().map(|r| r.flows.chargers[0].p_ch).collect();
            for (got, want) in executed.iter().zip(&oracle) {
                assert!((got - want).abs() < 1e-9, "{executed:?}");
            }
            assert!((trace.outcomes[0].e_final - 17.6).abs() < 1e-9);
        }
    }
}
