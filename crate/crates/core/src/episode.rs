//! The multi-agent decision process: observations, transitions, rewards,
//! rollouts and observation faults.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{allocate, AgentAction, AllocationOptions, DispatchError, ExogenousStep, PowerFlows};
use crate::metrics::{
    completion_dispersion, completion_ratio, fairness, satisfaction_at, step_cost, FapMode, SessionOutcome, StepCost,
};
use crate::scenario::Scenario;
use crate::station::{degradation, step_battery, ChargerState, DegradationOutcome, StationError};

pub const OBS_DIM: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Station(#[from] StationError),
    #[error("charger index {index} out of range for {n} chargers")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("episode already finished")]
    EpisodeOver,
    #[error("controller returned {got} actions for {expected} chargers at step {step}")]
    ActionArity { step: usize, expected: usize, got: usize },
    #[error("non-finite action at step {step} from agent {agent}: {action:?}")]
    NonFiniteAction { step: usize, agent: usize, action: AgentAction },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// What one agent sees. All zeros when its charger is empty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentObservation {
    /// Battery energy, kWh.
    pub e: f64,
    /// Hours to departure.
    pub t_rem: f64,
    /// Target energy, kWh.
    pub e_dem: f64,
    pub k_buy: f64,
    pub k_sell: f64,
    /// kW
    pub pv_gen: f64,
}

impl AgentObservation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [self.e, self.t_rem, self.e_dem, self.k_buy, self.k_sell, self.pv_gen]
    }

    pub fn from_array(a: [f64; OBS_DIM]) -> Self {
        Self {
            e: a[0],
            t_rem: a[1],
            e_dem: a[2],
            k_buy: a[3],
            k_sell: a[4],
            pv_gen: a[5],
        }
    }

    pub fn occupied(&self) -> bool {
        self.to_array() != [0.0; OBS_DIM]
    }
}

/// Sign of the fairness term in the user reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FairnessMode {
    /// `U - psi`: deviation from the mean is penalised.
    #[default]
    Minus,
    /// `U + psi`, the literal published form.
    Plus,
    /// `U` alone.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Weight of the cost term against the user term.
    pub xi: f64,
    pub rho: f64,
    /// Per kW of grid-limit excess.
    pub grid_penalty_coeff: f64,
    pub fairness: FairnessMode,
    pub fap_mode: FapMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            xi: 0.5,
            rho: 1.0,
            grid_penalty_coeff: 1.0,
            fairness: FairnessMode::Minus,
            fap_mode: FapMode::Floored,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(EngineError::InvalidConfig(format!("xi must lie in [0, 1], got {}", self.xi)));
        }
        if self.grid_penalty_coeff.is_nan() || self.grid_penalty_coeff < 0.0 {
            return Err(EngineError::InvalidConfig("grid_penalty_coeff must be non-negative".into()));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(EngineError::InvalidConfig("rho must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EngineOptions {
    pub reward: RewardConfig,
    pub allocation: AllocationOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationState {
    pub step: usize,
    pub chargers: Vec<ChargerState>,
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub flows: PowerFlows,
    pub cost: StepCost,
    /// Satisfaction of each active agent after the step.
    pub satisfaction: Vec<Option<f64>>,
    pub done: bool,
}

/// One station episode over a scenario.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    scenario: &'a Scenario,
    opts: EngineOptions,
    state: StationState,
    next_session: usize,
    outcomes: Vec<SessionOutcome>,
}

impl<'a> Environment<'a> {
    pub fn new(scenario: &'a Scenario, opts: EngineOptions) -> Result<Self, EngineError> {
        opts.reward.validate()?;
        scenario
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        let mut env = Self {
            scenario,
            opts,
            state: StationState {
                step: 0,
                chargers: vec![ChargerState::empty(); scenario.n_chargers()],
            },
            next_session: 0,
            outcomes: Vec::new(),
        };
        env.admit_arrivals();
        Ok(env)
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    pub fn state(&self) -> &StationState {
        &self.state
    }

    pub fn n_agents(&self) -> usize {
        self.state.chargers.len()
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.scenario.horizon()
    }

    pub fn outcomes(&self) -> &[SessionOutcome] {
        &self.outcomes
    }

    /// Prices and PV for the current step (the last step once finished).
    pub fn exogenous(&self) -> &ExogenousStep {
        let t = self.state.step.min(self.scenario.horizon() - 1);
        &self.scenario.exogenous[t]
    }

    pub fn observe(&self, j: usize) -> Result<AgentObservation, EngineError> {
        let n = self.n_agents();
        let c = self.state.chargers.get(j).ok_or(EngineError::IndexOutOfRange { index: j, n })?;
        let Some(s) = &c.session else {
            return Ok(AgentObservation::default());
        };
        let ex = self.exogenous();
        Ok(AgentObservation {
            e: c.energy,
            t_rem: c.remaining_hours(&self.scenario.config),
            e_dem: s.e_demand,
            k_buy: ex.kappa_buy,
            k_sell: ex.kappa_sell,
            pv_gen: ex.pv_gen,
        })
    }

    pub fn observe_all(&self) -> Vec<AgentObservation> {
        (0..self.n_agents())
            .map(|j| self.observe(j).expect("index in range"))
            .collect()
    }

    fn admit_arrivals(&mut self) {
        let t = self.state.step;
        while let Some(s) = self.scenario.sessions.get(self.next_session) {
            if s.arrival_step > t {
                break;
            }
            if s.arrival_step == t {
                self.state.chargers[s.charger_id] = ChargerState::plugged(*s);
            }
            self.next_session += 1;
        }
    }

    /// Applies one joint action and advances the clock.
    pub fn step(&mut self, actions: &[AgentAction]) -> Result<StepOutcome, EngineError> {
        if self.is_done() {
            return Err(EngineError::EpisodeOver);
        }
        let cfg = self.scenario.config;
        let n = self.n_agents();
        if actions.len() != n {
            return Err(EngineError::ActionArity {
                step: self.state.step,
                expected: n,
                got: actions.len(),
            });
        }
        let ex = *self.exogenous();
        let flows = allocate(actions, &self.state.chargers, &ex, &cfg, &self.opts.allocation)?;

        let mut degradations = vec![DegradationOutcome::default(); n];
        let mut next = Vec::with_capacity(n);
        for (j, c) in self.state.chargers.iter().enumerate() {
            let f = &flows.chargers[j];
            if let Some(s) = &c.session {
                degradations[j] = degradation(f.p_ch, f.p_disch, s, cfg.delta_t)?;
            }
            next.push(step_battery(c, f.p_ch, f.p_disch, &cfg)?);
        }
        let active: Vec<usize> = (0..n).filter(|&j| self.state.chargers[j].occupied()).collect();
        let cost = step_cost(&flows, &ex, &degradations, cfg.delta_t, active.len());

        let r = &self.opts.reward;
        let mut satisfaction = vec![None; n];
        let mut u = Vec::with_capacity(active.len());
        for &j in &active {
            let before = &self.state.chargers[j];
            let s = before.session.as_ref().expect("active charger has a session");
            let sat = satisfaction_at(
                next[j].energy,
                s.e_demand,
                before.remaining_hours(&cfg),
                r.rho,
                cfg.p_ch_max,
                r.fap_mode,
            )
            .expect("occupied charger has time left");
            satisfaction[j] = Some(sat.u);
            u.push(sat.u);
        }
        let psi = fairness(&u);
        let mut rewards = vec![0.0; n];
        if !active.is_empty() {
            let cost_share = -cost.total() / active.len() as f64;
            let grid = -r.grid_penalty_coeff * flows.grid_violation;
            for (k, &j) in active.iter().enumerate() {
                let user = match r.fairness {
                    FairnessMode::Minus => u[k] - psi[k],
                    FairnessMode::Plus => u[k] + psi[k],
                    FairnessMode::Off => u[k],
                };
                rewards[j] = r.xi * cost_share + (1.0 - r.xi) * user + grid;
            }
        }

        for (j, c) in next.iter_mut().enumerate() {
            if let Some(s) = c.session {
                if c.remaining_steps == 0 {
                    self.outcomes.push(SessionOutcome {
                        session_id: s.id,
                        charger_id: j,
                        e_init: s.e_init,
                        e_demand: s.e_demand,
                        e_final: c.energy,
                    });
                    *c = ChargerState::empty();
                }
            }
        }
        self.state.chargers = next;
        self.state.step += 1;
        self.admit_arrivals();
        Ok(StepOutcome {
            rewards,
            flows,
            cost,
            satisfaction,
            done: self.is_done(),
        })
    }
}

/// Read-only view handed to a controller each step.
///
/// `observations` is what the agents report, possibly corrupted by a fault.
/// `chargers` and `scenario` are ground truth, for model-based controllers
/// only.
#[derive(Debug, Clone, Copy)]
pub struct StationView<'a> {
    pub step: usize,
    pub observations: &'a [AgentObservation],
    pub chargers: &'a [ChargerState],
    pub scenario: &'a Scenario,
}

pub trait Controller {
    fn act(&mut self, view: &StationView<'_>) -> Vec<AgentAction>;
}

/// A policy that sees one agent's observation and nothing else.
pub trait LocalPolicy {
    fn act_local(&mut self, obs: &AgentObservation) -> AgentAction;
}

impl<F: FnMut(&AgentObservation) -> AgentAction> LocalPolicy for F {
    fn act_local(&mut self, obs: &AgentObservation) -> AgentAction {
        self(obs)
    }
}

/// Runs one local policy per agent on that agent's own observation.
pub struct Decentralized<P> {
    pub agents: Vec<P>,
}

impl<P> Decentralized<P> {
    pub fn new(agents: Vec<P>) -> Self {
        Self { agents }
    }
}

impl<P: LocalPolicy> Controller for Decentralized<P> {
    fn act(&mut self, view: &StationView<'_>) -> Vec<AgentAction> {
        self.agents
            .iter_mut()
            .zip(view.observations)
            .map(|(p, o)| p.act_local(o))
            .collect()
    }
}

/// Per-field limits used to draw corrupted observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationBounds {
    pub lo: [f64; OBS_DIM],
    pub hi: [f64; OBS_DIM],
}

impl ObservationBounds {
    /// Zero up to the largest value each field can take in `scenario`.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let cfg = &scenario.config;
        let e_max = scenario.sessions.iter().map(|s| s.e_max).fold(0.0, f64::max);
        let stay = scenario.sessions.iter().map(|s| s.stay_steps()).max().unwrap_or(0);
        let max = |f: fn(&ExogenousStep) -> f64| scenario.exogenous.iter().map(f).fold(0.0, f64::max);
        Self {
            lo: [0.0; OBS_DIM],
            hi: [
                e_max,
                stay as f64 * cfg.delta_t,
                e_max,
                max(|e| e.kappa_buy),
                max(|e| e.kappa_sell),
                max(|e| e.pv_gen),
            ],
        }
    }
}

/// From `fault_step` on, the listed chargers report random observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub fault_step: usize,
    pub faulty_chargers: Vec<usize>,
    pub bounds: ObservationBounds,
}

impl FaultSpec {
    pub fn is_active(&self, step: usize) -> bool {
        step >= self.fault_step
    }

    pub fn is_faulty(&self, j: usize) -> bool {
        self.faulty_chargers.contains(&j)
    }
}

/// Replaces faulty agents' observations with fresh uniform draws.
///
/// Before the fault step this is the identity. Draws are made in charger then
/// field order so a seeded rng gives a reproducible sequence.
pub fn corrupt_observations<R: Rng + ?Sized>(
    obs: &[AgentObservation],
    step: usize,
    fault: &FaultSpec,
    rng: &mut R,
) -> Vec<AgentObservation> {
    let mut out = obs.to_vec();
    if !fault.is_active(step) {
        return out;
    }
    for (j, o) in out.iter_mut().enumerate() {
        if !fault.is_faulty(j) {
            continue;
        }
        let mut a = [0.0; OBS_DIM];
        for (k, v) in a.iter_mut().enumerate() {
            let (lo, hi) = (fault.bounds.lo[k], fault.bounds.hi[k]);
            *v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        }
        *o = AgentObservation::from_array(a);
    }
    out
}

/// One executed step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Observations as handed to the controller.
    pub observations: Vec<AgentObservation>,
    pub actions: Vec<AgentAction>,
    pub rewards: Vec<f64>,
    /// True observations after the step.
    pub next_observations: Vec<AgentObservation>,
    pub flows: PowerFlows,
    pub cost: StepCost,
    pub done: bool,
}

/// A replay tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub obs: Vec<AgentObservation>,
    pub actions: Vec<AgentAction>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<AgentObservation>,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Net station cost over the episode.
    pub total_cost: f64,
    pub energy_cost: f64,
    pub pv_sale: f64,
    pub battery_cost: f64,
    /// Cost incurred while no EV was present; no agent is charged for it.
    pub unattributed_cost: f64,
    /// Mean completion over finished sessions, percent.
    pub completion: f64,
    /// Standard deviation of per-session completion, percent.
    pub fairness_dispersion: f64,
    /// Sum of all agents' rewards.
    pub total_reward: f64,
    /// `total_reward` divided by the number of agents.
    pub mean_reward: f64,
    /// Grid-limit excess integrated over time, kWh.
    pub grid_violation_kwh: f64,
    pub sessions: usize,
}

/// Counts how often faulty observations changed healthy agents' actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultAudit {
    pub steps_checked: usize,
    pub steps_changed: usize,
    pub actions_changed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
    pub outcomes: Vec<SessionOutcome>,
    pub metrics: EpisodeMetrics,
    pub fault_audit: Option<FaultAudit>,
}

impl EpisodeTrace {
    pub fn transitions(&self) -> impl Iterator<Item = TransitionRecord> + '_ {
        self.steps.iter().map(|s| TransitionRecord {
            obs: s.observations.clone(),
            actions: s.actions.clone(),
            rewards: s.rewards.clone(),
            next_obs: s.next_observations.clone(),
            done: s.done,
        })
    }

    /// One JSON object per step.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn same_action(a: &AgentAction, b: &AgentAction) -> bool {
    a.p_signed.to_bits() == b.p_signed.to_bits()
        && a.v2v_request.to_bits() == b.v2v_request.to_bits()
        && a.pv_request.to_bits() == b.pv_request.to_bits()
}

/// Runs `controller` through `scenario`.
///
/// With a fault, the controller is also queried on the clean observations at
/// every faulty step and the healthy agents' two answers are compared bit for
/// bit; the corrupted answer is the one executed.
pub fn rollout<C: Controller + ?Sized>(
    scenario: &Scenario,
    controller: &mut C,
    fault: Option<&FaultSpec>,
    seed: u64,
    opts: &EngineOptions,
) -> Result<EpisodeTrace, EngineError> {
    let mut env = Environment::new(scenario, *opts)?;
    let n = env.n_agents();
    if let Some(f) = fault {
        if let Some(&j) = f.faulty_chargers.iter().find(|&&j| j >= n) {
            return Err(EngineError::IndexOutOfRange { index: j, n });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audit = fault.map(|_| FaultAudit::default());
    let mut steps = Vec::with_capacity(scenario.horizon());
    let mut m = EpisodeMetrics::default();
    let dt = scenario.config.delta_t;

    while !env.is_done() {
        let t = env.state().step;
        let clean = env.observe_all();
        let seen = match fault {
            Some(f) if f.is_active(t) => corrupt_observations(&clean, t, f, &mut rng),
            _ => clean.clone(),
        };
        let chargers = env.state().chargers.clone();
        let view = |o| StationView {
            step: t,
            observations: o,
            chargers: &chargers,
            scenario,
        };
        let reference = match (fault, audit.as_mut()) {
            (Some(f), Some(_)) if f.is_active(t) => Some(controller.act(&view(&clean))),
            _ => None,
        };
        let actions = controller.act(&view(&seen));
        if actions.len() != n {
            return Err(EngineError::ActionArity { step: t, expected: n, got: actions.len() });
        }
        if let Some(agent) = actions.iter().position(|a| !a.is_finite()) {
            return Err(EngineError::NonFiniteAction { step: t, agent, action: actions[agent] });
        }
        if let (Some(reference), Some(a), Some(f)) = (reference, audit.as_mut(), fault) {
            a.steps_checked += 1;
            let changed = (0..n)
                .filter(|&j| !f.is_faulty(j) && !same_action(&reference[j], &actions[j]))
                .count();
            if changed > 0 {
                a.steps_changed += 1;
                a.actions_changed += changed;
            }
        }
        let out = env.step(&actions)?;
        if out.cost.n_active == 0 {
            m.unattributed_cost += out.cost.total();
        }
        m.energy_cost += out.cost.energy_cost;
        m.pv_sale += out.cost.pv_sale;
        m.battery_cost += out.cost.battery_cost;
        m.total_reward += out.rewards.iter().sum::<f64>();
        m.grid_violation_kwh += out.flows.grid_violation * dt;
        steps.push(StepRecord {
            step: t,
            observations: seen,
            actions,
            rewards: out.rewards,
            next_observations: env.observe_all(),
            flows: out.flows,
            cost: out.cost,
            done: out.done,
        });
    }
    let outcomes = env.outcomes().to_vec();
    m.total_cost = m.energy_cost - m.pv_sale + m.battery_cost;
    m.mean_reward = m.total_reward / n as f64;
    m.completion = completion_ratio(&outcomes);
    m.fairness_dispersion = completion_dispersion(&outcomes);
    m.sessions = outcomes.len();
    Ok(EpisodeTrace {
        steps,
        outcomes,
        metrics: m,
        fault_audit: audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::station::{BatteryDefaults, ChargerSession, StationConfig};

    fn scenario(n: usize, horizon: usize, sessions: Vec<ChargerSession>, buy: f64, pv: f64) -> Scenario {
        Scenario {
            config: StationConfig { n_chargers: n, ..Default::default() },
            exogenous: vec![ExogenousStep::new(buy, 0.1, pv); horizon],
            sessions,
        }
    }

    fn session(id: u64, charger: usize, arrival: usize, departure: usize, demand: f64, init: f64) -> ChargerSession {
        ChargerSession::with_defaults(id, charger, arrival, departure, demand, init, 40.0, &BatteryDefaults::default())
    }

    fn greedy() -> Decentralized<impl LocalPolicy> {
        Decentralized::new(vec![
            |o: &AgentObservation| if o.occupied() { AgentAction::new(16.0, 0.0, 0.0) } else { AgentAction::ZERO };
            4
        ])
    }

    #[test]
    fn observation_field_mapping() {
        let mut sc = scenario(2, 40, vec![session(0, 0, 0, 20, 30.0, 10.0)], 0.4, 12.0);
        sc.exogenous[0] = ExogenousStep::new(0.4, 0.1, 12.0);
        let env = Environment::new(&sc, EngineOptions::default()).unwrap();
        let o = env.observe(0).unwrap();
        assert_eq!(o.to_array(), [10.0, 5.0, 30.0, 0.4, 0.1, 12.0]);
        assert_eq!(env.observe(1).unwrap(), AgentObservation::default());
        assert!(matches!(env.observe(2), Err(EngineError::IndexOutOfRange { index: 2, n: 2 })));
    }

    #[test]
    fn empty_station_gives_zero_rewards() {
        let sc = scenario(2, 3, vec![], 0.4, 0.0);
        let mut env = Environment::new(&sc, EngineOptions::default()).unwrap();
        let out = env.step(&[AgentAction::ZERO; 2]).unwrap();
        assert_eq!(out.rewards, vec![0.0, 0.0]);
        assert_eq!(env.state().step, 1);
    }

    #[test]
    fn single_agent_cost_reward() {
        // 16 kW from the grid for 15 minutes at 0.25/kWh costs 1.0; wear is 0.095.
        let sc = scenario(1, 4, vec![session(0, 0, 0, 4, 40.0, 10.0)], 0.25, 0.0);
        let opts = EngineOptions {
            reward: RewardConfig { xi: 1.0, grid_penalty_coeff: 0.0, ..Default::default() },
            ..Default::default()
        };
        let mut env = Environment::new(&sc, opts).unwrap();
        let out = env.step(&[AgentAction::new(16.0, 0.0, 0.0)]).unwrap();
        assert!((out.cost.energy_cost - 1.0).abs() < 1e-12);
        assert!((out.cost.battery_cost - 0.095).abs() < 1e-12);
        assert!((out.rewards[0] + 1.095).abs() < 1e-12);
    }

    #[test]
    fn grid_penalty_hits_every_active_agent() {
        let mut sc = scenario(2, 4, vec![session(0, 0, 0, 4, 40.0, 10.0), session(1, 1, 0, 4, 40.0, 10.0)], 0.25, 0.0);
        sc.config.g_max = 27.0;
        let opts = EngineOptions {
            reward: RewardConfig { xi: 1.0, grid_penalty_coeff: 10.0, ..Default::default() },
            ..Default::default()
        };
        let mut env = Environment::new(&sc, opts).unwrap();
        let out = env.step(&[AgentAction::new(16.0, 0.0, 0.0); 2]).unwrap();
        assert!((out.flows.grid_violation - 5.0).abs() < 1e-12);
        let cost_share = -out.cost.total() / 2.0;
        for r in out.rewards {
            assert!((r - (cost_share - 50.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn user_reward_uses_fairness_sign() {
        let sessions = vec![session(0, 0, 0, 20, 30.0, 10.0), session(1, 1, 0, 20, 30.0, 26.0)];
        let sc = scenario(2, 20, sessions, 0.25, 0.0);
        let mut rewards = Vec::new();
        for fairness in [FairnessMode::Minus, FairnessMode::Plus, FairnessMode::Off] {
            let opts = EngineOptions {
                reward: RewardConfig { xi: 0.0, fairness, ..Default::default() },
                ..Default::default()
            };
            let mut env = Environment::new(&sc, opts).unwrap();
            rewards.push(env.step(&[AgentAction::ZERO; 2]).unwrap().rewards);
        }
        // u = -(20/5)/16 = -0.25 and -(4/5)/16 = -0.05, psi = 0.1 each
        assert!((rewards[0][0] + 0.35).abs() < 1e-12 && (rewards[0][1] + 0.15).abs() < 1e-12);
        assert!((rewards[1][0] + 0.15).abs() < 1e-12 && (rewards[1][1] - 0.05).abs() < 1e-12);
        assert!((rewards[2][0] + 0.25).abs() < 1e-12 && (rewards[2][1] + 0.05).abs() < 1e-12);
    }

    #[test]
    fn arrivals_and_departures_follow_the_scenario() {
        let sc = scenario(1, 6, vec![session(0, 0, 1, 3, 30.0, 10.0), session(1, 0, 3, 5, 30.0, 12.0)], 0.25, 0.0);
        let mut env = Environment::new(&sc, EngineOptions::default()).unwrap();
        let mut occupancy = Vec::new();
        while !env.is_done() {
            occupancy.push(env.state().chargers[0].session.map(|s| s.id));
            env.step(&[AgentAction::ZERO]).unwrap();
        }
        assert_eq!(occupancy, vec![None, Some(0), Some(0), Some(1), Some(1), None]);
        assert_eq!(env.outcomes().len(), 2);
        assert!(matches!(env.step(&[AgentAction::ZERO]), Err(EngineError::EpisodeOver)));
    }

    #[test]
    fn zero_policy_completion_reflects_initial_energy() {
        let sc = scenario(2, 10, vec![session(0, 0, 0, 10, 30.0, 10.0), session(1, 1, 0, 10, 20.0, 20.0)], 0.25, 0.0);
        let mut c = Decentralized::new(vec![|_: &AgentObservation| AgentAction::ZERO; 2]);
        let tr = rollout(&sc, &mut c, None, 0, &EngineOptions::default()).unwrap();
        assert_eq!(tr.metrics.completion, 50.0);
    }

    #[test]
    fn greedy_charging_completes_with_ample_time() {
        let sc = scenario(1, 96, vec![session(0, 0, 0, 96, 35.0, 5.0)], 0.25, 0.0);
        let tr = rollout(&sc, &mut greedy(), None, 0, &EngineOptions::default()).unwrap();
        assert_eq!(tr.metrics.completion, 100.0);
    }

    #[test]
    fn rollout_is_deterministic() {
        let sc = crate::scenario::generate_synthetic(4, 1, 3, &Default::default());
        let fault = FaultSpec { fault_step: 20, faulty_chargers: vec![1], bounds: ObservationBounds::for_scenario(&sc) };
        let a = rollout(&sc, &mut greedy(), Some(&fault), 9, &EngineOptions::default()).unwrap();
        let b = rollout(&sc, &mut greedy(), Some(&fault), 9, &EngineOptions::default()).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), sc.horizon());
    }

    #[test]
    fn nan_policy_aborts_with_diagnostics() {
        let sc = scenario(1, 4, vec![session(0, 0, 0, 4, 30.0, 10.0)], 0.25, 0.0);
        let mut c = Decentralized::new(vec![|_: &AgentObservation| AgentAction::new(f64::NAN, 0.0, 0.0)]);
        let err = rollout(&sc, &mut c, None, 0, &EngineOptions::default()).unwrap_err();
        assert!(matches!(err, EngineError::NonFiniteAction { step: 0, agent: 0, .. }));
    }

    #[test]
    fn corruption_leaves_healthy_agents_alone() {
        let sc = crate::scenario::generate_synthetic(3, 1, 1, &Default::default());
        let bounds = ObservationBounds::for_scenario(&sc);
        let obs: Vec<_> = (0..3).map(|j| AgentObservation::from_array([j as f64 + 1.0; OBS_DIM])).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let none = FaultSpec { fault_step: 0, faulty_chargers: vec![], bounds };
        assert_eq!(corrupt_observations(&obs, 5, &none, &mut rng), obs);
        let f = FaultSpec { fault_step: 0, faulty_chargers: vec![1], bounds };
        assert_eq!(corrupt_observations(&obs, 0, &FaultSpec { fault_step: 3, ..f.clone() }, &mut rng), obs);
        for _ in 0..10_000 {
            let c = corrupt_observations(&obs, 5, &f, &mut rng);
            assert_eq!(c[0].to_array().map(f64::to_bits), obs[0].to_array().map(f64::to_bits));
            assert_eq!(c[2].to_array().map(f64::to_bits), obs[2].to_array().map(f64::to_bits));
            for (k, v) in c[1].to_array().iter().enumerate() {
                assert!(*v >= bounds.lo[k] && *v <= bounds.hi[k]);
            }
        }
    }

    #[test]
    fn decentralized_policies_ignore_other_agents_faults() {
        let sc = crate::scenario::generate_synthetic(4, 1, 2, &Default::default());
        let fault = FaultSpec { fault_step: 10, faulty_chargers: vec![0, 2], bounds: ObservationBounds::for_scenario(&sc) };
        let mut c = Decentralized::new(vec![
            |o: &AgentObservation| AgentAction::new((o.e_dem - o.e).clamp(-16.0, 16.0), 0.5, o.pv_gen / 30.0);
            4
        ]);
        let tr = rollout(&sc, &mut c, Some(&fault), 4, &EngineOptions::default()).unwrap();
        let audit = tr.fault_audit.unwrap();
        assert_eq!(audit.steps_checked, sc.horizon() - 10);
        assert_eq!(audit.actions_changed, 0);
    }
}
