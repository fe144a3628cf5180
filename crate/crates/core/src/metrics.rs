//! Satisfaction, fairness, cost and completion accounting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{ExogenousStep, PowerFlows};
use crate::station::{ChargerState, DegradationOutcome, StationConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("charger is not occupied")]
    NotOccupied,
    #[error("no time left before departure; use the completion metric instead")]
    DepartureBoundary,
}

/// Whether the future average power may go negative once demand is met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FapMode {
    #[default]
    Floored,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Satisfaction {
    /// Future average power, kW.
    pub fap: f64,
    pub u: f64,
}

/// Satisfaction for an energy level `energy` with `t_rem_hours` to go.
pub fn satisfaction_at(
    energy: f64,
    e_demand: f64,
    t_rem_hours: f64,
    rho: f64,
    p_ch_max: f64,
    mode: FapMode,
) -> Result<Satisfaction, MetricsError> {
    if t_rem_hours <= 0.0 {
        return Err(MetricsError::DepartureBoundary);
    }
    let mut fap = (e_demand - energy) / t_rem_hours;
    if mode == FapMode::Floored {
        fap = fap.max(0.0);
    }
    Ok(Satisfaction {
        fap,
        u: -rho * fap / p_ch_max,
    })
}

pub fn satisfaction(
    state: &ChargerState,
    rho: f64,
    cfg: &StationConfig,
    mode: FapMode,
) -> Result<Satisfaction, MetricsError> {
    let session = state.session.as_ref().ok_or(MetricsError::NotOccupied)?;
    satisfaction_at(
        state.energy,
        session.e_demand,
        state.remaining_hours(cfg),
        rho,
        cfg.p_ch_max,
        mode,
    )
}

/// Absolute deviation of each satisfaction value from their mean.
pub fn fairness(u: &[f64]) -> Vec<f64> {
    if u.is_empty() {
        return Vec::new();
    }
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    u.iter().map(|x| (x - mean).abs()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepCost {
    pub energy_cost: f64,
    pub pv_sale: f64,
    pub battery_cost: f64,
    pub n_active: usize,
}

impl StepCost {
    /// Net station cost: grid energy minus PV revenue plus battery wear.
    pub fn total(&self) -> f64 {
        self.energy_cost - self.pv_sale + self.battery_cost
    }

    pub fn accumulate(&mut self, other: &StepCost) {
        self.energy_cost += other.energy_cost;
        self.pv_sale += other.pv_sale;
        self.battery_cost += other.battery_cost;
    }
}

/// Station cost of one step. V2V transfers settle between EVs and cancel out.
pub fn step_cost(
    flows: &PowerFlows,
    ex: &ExogenousStep,
    degradations: &[DegradationOutcome],
    delta_t: f64,
    n_active: usize,
) -> StepCost {
    let energy_cost = flows
        .chargers
        .iter()
        .map(|f| (f.p_g2v * ex.kappa_buy - f.p_v2g * ex.kappa_sell) * delta_t)
        .sum();
    StepCost {
        energy_cost,
        pv_sale: flows.p_pvg * ex.kappa_sell * delta_t,
        battery_cost: degradations.iter().map(|d| d.cost).sum(),
        n_active,
    }
}

/// Energy state of a session when its EV left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub session_id: u64,
    pub charger_id: usize,
    pub e_init: f64,
    pub e_demand: f64,
    pub e_final: f64,
}

impl SessionOutcome {
    /// Share of the requested energy delivered, in [0, 1].
    pub fn ratio(&self) -> f64 {
        let needed = self.e_demand - self.e_init;
        if needed <= 0.0 {
            return 1.0;
        }
        ((self.e_final - self.e_init) / needed).clamp(0.0, 1.0)
    }
}

/// Mean completion over sessions, as a percentage. No sessions gives 100.
pub fn completion_ratio(outcomes: &[SessionOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 100.0;
    }
    100.0 * outcomes.iter().map(SessionOutcome::ratio).sum::<f64>() / outcomes.len() as f64
}

/// Population standard deviation of per-session completion, in percent.
pub fn completion_dispersion(outcomes: &[SessionOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    let r: Vec<f64> = outcomes.iter().map(|o| 100.0 * o.ratio()).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt()
}

/// Per-session distance between completion and mean completion, in percent.
pub fn completion_deviation(outcomes: &[SessionOutcome]) -> Vec<f64> {
    let r: Vec<f64> = outcomes.iter().map(|o| 100.0 * o.ratio()).collect();
    fairness(&r)
}
