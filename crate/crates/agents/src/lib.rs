//! Charging controllers for the voltmesh station model.
//!
//! [`maddpg`] trains one actor per charger with centralized critics and
//! deploys the actors on local observations only. [`madqn`] is a centralized
//! value-based learner over a discrete action set, [`rho`] re-solves a
//! linear dispatch program over a look-ahead window, and [`uncontrolled`]
//! charges at full power on arrival.

pub mod checkpoint;
pub mod features;
pub mod maddpg;
pub mod madqn;
pub mod parallel;
pub mod replay;
pub mod rho;
pub mod uncontrolled;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use voltmesh_core::{rollout, Controller, EngineError, EngineOptions, EpisodeMetrics, Scenario, StationConfig};

pub use checkpoint::{load_policy, save_policy, SavedPolicy};
pub use features::{action_from_unit, unit_from_action, Featurizer, ACT_DIM};
pub use maddpg::{train, Exploration, MaddpgPolicy, TrainConfig, TrainOutcome};
pub use madqn::{madqn_train, MadqnConfig, MadqnOutcome, MadqnPolicy};
pub use replay::{Minibatch, ReplayBuffer, Transition};
pub use rho::{forecast_window, rho_plan, Forecast, RhoConfig, RhoController, RhoPlan, RhoTrigger, RhoWindow};
pub use uncontrolled::{uncontrolled_action, Uncontrolled};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] voltmesh_nn::NnError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Lp(#[from] voltmesh_lp::LpError),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One point of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    /// Index into the training pool of the scenario played.
    pub scenario: usize,
    /// Episode reward summed over steps, averaged over agents.
    pub mean_reward: f64,
    /// Completion ratio in percent.
    pub completion: f64,
    pub cost: f64,
}

/// First episode whose trailing `window`-episode mean reward covers `frac`
/// of the way from the first full window to the mean of the last `tail`
/// episodes. `None` if the curve is shorter than `window` or `tail`.
pub fn episodes_to_converge(curve: &[EpisodeStats], window: usize, tail: usize, frac: f64) -> Option<usize> {
    if window == 0 || tail == 0 || curve.len() < window.max(tail) {
        return None;
    }
    let r: Vec<f64> = curve.iter().map(|s| s.mean_reward).collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let initial = mean(&r[..window]);
    let last = mean(&r[r.len() - tail..]);
    let threshold = initial + frac * (last - initial);
    (window - 1..r.len()).find(|&e| mean(&r[e + 1 - window..=e]) >= threshold)
}

/// Checks that a training pool is non-empty, valid and shares one station.
pub fn check_scenarios(scenarios: &[Scenario]) -> Result<StationConfig, AgentError> {
    let first = scenarios
        .first()
        .ok_or_else(|| AgentError::InvalidConfig("empty scenario pool".into()))?;
    for s in scenarios {
        s.validate().map_err(|e| AgentError::InvalidConfig(e.to_string()))?;
        if s.config != first.config {
            return Err(AgentError::InvalidConfig("scenarios differ in station configuration".into()));
        }
    }
    Ok(first.config)
}

/// Runs `controller` once through `scenario` without faults.
pub fn evaluate<C: Controller + ?Sized>(
    scenario: &Scenario,
    controller: &mut C,
    opts: &EngineOptions,
) -> Result<EpisodeMetrics, AgentError> {
    Ok(rollout(scenario, controller, None, 0, opts)?.metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(r: &[f64]) -> Vec<EpisodeStats> {
        r.iter()
            .enumerate()
            .map(|(episode, &mean_reward)| EpisodeStats { episode, scenario: 0, mean_reward, completion: 0.0, cost: 0.0 })
            .collect()
    }

    #[test]
    fn convergence_episode() {
        let r = [-10.0, -10.0, -6.0, -2.0, -1.0, -1.0, -1.0, -1.0];
        // Threshold -10 + 0.95 * 9 = -1.45; trailing 2-episode means reach it at episode 5.
        assert_eq!(episodes_to_converge(&curve(&r), 2, 4, 0.95), Some(5));
        assert_eq!(episodes_to_converge(&curve(&r), 1, 4, 0.95), Some(4));
        assert_eq!(episodes_to_converge(&curve(&r[..1]), 2, 1, 0.95), None);
        // A flat curve converges immediately.
        assert_eq!(episodes_to_converge(&curve(&[3.0; 6]), 3, 3, 0.95), Some(2));
    }
}
