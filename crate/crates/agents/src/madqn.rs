//! Centralized multi-agent deep Q-learning over a discrete action set.
//!
//! Every agent's Q-network reads the concatenated observations of all
//! chargers, so a corrupted observation on one charger reaches every agent's
//! decision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use voltmesh_core::{
    completion_ratio, AgentAction, AgentObservation, Controller, EngineOptions, Environment, Scenario,
    StationConfig, StationView, OBS_DIM,
};
use voltmesh_nn::{Activation, Adam, LayerKind, LayerSpec, Matrix, Network};

use crate::features::Featurizer;
use crate::maddpg::td_target;
use crate::replay::{ReplayBuffer, Transition};
use crate::{check_scenarios, AgentError, EpisodeStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadqnConfig {
    /// Signed power as a fraction of the charge (positive) or discharge
    /// (negative) limit.
    pub power_levels: Vec<f64>,
    /// Values offered for both the V2V and the PV request.
    pub request_levels: Vec<f64>,
    pub gamma: f64,
    pub lr: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub eps_decay: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub update_every: usize,
    pub tau: f64,
    pub hidden: Vec<usize>,
    pub episodes: usize,
    pub max_grad_norm: Option<f64>,
    pub e_ref: f64,
}

impl Default for MadqnConfig {
    fn default() -> Self {
        Self {
            power_levels: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            request_levels: vec![0.0, 1.0],
            gamma: 0.95,
            lr: 1e-3,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay: 0.5,
            batch_size: 64,
            buffer_capacity: 100_000,
            warmup: 1000,
            update_every: 4,
            tau: 0.01,
            hidden: vec![64, 64],
            episodes: 300,
            max_grad_norm: Some(10.0),
            e_ref: 40.0,
        }
    }
}

impl MadqnConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !self.power_levels.iter().all(|p| (-1.0..=1.0).contains(p)) || !self.power_levels.contains(&0.0) {
            return bad("power levels must lie in [-1, 1] and include 0");
        }
        if self.request_levels.is_empty() || !self.request_levels.iter().all(|r| (0.0..=1.0).contains(r)) {
            return bad("request levels must be non-empty and lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.update_every == 0 || self.buffer_capacity == 0 {
            return bad("batch_size, update_every and buffer_capacity must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return bad("epsilon must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.power_levels.len() * self.request_levels.len() * self.request_levels.len()
    }

    fn epsilon(&self, episode: usize) -> f64 {
        let span = (self.eps_decay * self.episodes as f64).max(1.0);
        let frac = (episode as f64 / span).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Discrete actions ordered power-major, then PV request, then V2V request.
pub fn action_table(power_levels: &[f64], request_levels: &[f64], station: &StationConfig) -> Vec<AgentAction> {
    let mut table = Vec::with_capacity(power_levels.len() * request_levels.len().pow(2));
    for &p in power_levels {
        let p_signed = if p >= 0.0 { p * station.p_ch_max } else { p * station.p_disch_max };
        for &pv in request_levels {
            for &v2v in request_levels {
                table.push(AgentAction::new(p_signed, v2v, pv));
            }
        }
    }
    table
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy_index(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Trained per-agent Q-networks acting on the joint observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MadqnPolicy {
    pub q: Vec<Network>,
    pub power_levels: Vec<f64>,
    pub request_levels: Vec<f64>,
    pub featurizer: Featurizer,
    pub station: StationConfig,
}

impl MadqnPolicy {
    pub fn n_agents(&self) -> usize {
        self.q.len()
    }

    pub fn table(&self) -> Vec<AgentAction> {
        action_table(&self.power_levels, &self.request_levels, &self.station)
    }

    /// Greedy action indices for a joint observation.
    pub fn greedy(&self, obs: &[AgentObservation]) -> Result<Vec<usize>, AgentError> {
        let x = joint_features(&self.featurizer, obs);
        self.q
            .iter()
            .map(|net| Ok(greedy_index(&net.forward(&x)?)))
            .collect()
    }
}

impl Controller for MadqnPolicy {
    fn act(&mut self, view: &StationView<'_>) -> Vec<AgentAction> {
        let table = self.table();
        self.greedy(view.observations)
            .expect("joint observation width matches the trained networks")
            .into_iter()
            .map(|i| table[i])
            .collect()
    }
}

fn joint_features(f: &Featurizer, obs: &[AgentObservation]) -> Vec<f64> {
    obs.iter().flat_map(|o| f.features(o)).collect()
}

pub struct MadqnOutcome {
    pub policy: MadqnPolicy,
    pub curve: Vec<EpisodeStats>,
}

/// Squared TD error on the taken action only. Returns the loss before the
/// step.
fn q_update(
    net: &mut Network,
    opt: &mut Adam,
    obs: &Matrix,
    taken: &[usize],
    targets: &[f64],
    max_norm: Option<f64>,
) -> Result<f64, AgentError> {
    let q = net.forward_batch(obs)?;
    let b = targets.len() as f64;
    let mut upstream = Matrix::zeros(q.rows(), q.cols());
    let mut loss = 0.0;
    for (i, (&a, &y)) in taken.iter().zip(targets).enumerate() {
        let d = q.get(i, a) - y;
        loss += d * d;
        upstream.set(i, a, 2.0 * d / b);
    }
    loss /= b;
    if !loss.is_finite() {
        return Err(AgentError::Divergence(format!("Q loss is {loss}")));
    }
    let (mut g, _) = net.backward(&upstream)?;
    if let Some(m) = max_norm {
        g.clip_global_norm(m);
    }
    opt.step(net, &g)?;
    Ok(loss)
}

/// Trains one Q-network per charger with epsilon-greedy exploration.
pub fn madqn_train(
    scenarios: &[Scenario],
    cfg: &MadqnConfig,
    opts: &EngineOptions,
    seed: u64,
) -> Result<MadqnOutcome, AgentError> {
    cfg.validate()?;
    let station = check_scenarios(scenarios)?;
    let n = station.n_chargers;
    let featurizer = Featurizer::for_station(&station, cfg.e_ref);
    let table = action_table(&cfg.power_levels, &cfg.request_levels, &station);
    let n_actions = table.len();

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut init_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut explore_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut replay_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut pick_rng = ChaCha8Rng::seed_from_u64(master.random());

    let mut specs: Vec<LayerSpec> = cfg
        .hidden
        .iter()
        .map(|&h| LayerSpec::new(h, LayerKind::Plain, Activation::Relu))
        .collect();
    specs.push(LayerSpec::new(n_actions, LayerKind::Plain, Activation::Identity));
    let mut q: Vec<Network> = (0..n).map(|_| Network::new(n * OBS_DIM, &specs, &mut init_rng)).collect();
    let mut target = q.clone();
    let mut optim: Vec<Adam> = q.iter().map(|net| Adam::new(net, cfg.lr)).collect();

    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut total_steps = 0usize;

    for episode in 0..cfg.episodes {
        let pick = pick_rng.random_range(0..scenarios.len());
        let scenario = &scenarios[pick];
        let mut env = Environment::new(scenario, *opts)?;
        let eps = cfg.epsilon(episode);
        let mut obs = joint_features(&featurizer, &env.observe_all());
        let (mut reward_sum, mut cost) = (0.0, 0.0);
        while !env.is_done() {
            let mut chosen = Vec::with_capacity(n);
            for net in &q {
                let a = if explore_rng.random::<f64>() < eps {
                    explore_rng.random_range(0..n_actions)
                } else {
                    greedy_index(&net.forward(&obs)?)
                };
                chosen.push(a);
            }
            let actions: Vec<AgentAction> = chosen.iter().map(|&i| table[i]).collect();
            let out = env.step(&actions)?;
            let next = joint_features(&featurizer, &env.observe_all());
            reward_sum += out.rewards.iter().sum::<f64>();
            cost += out.cost.total();
            buffer.push(Transition {
                obs: std::mem::replace(&mut obs, next.clone()),
                actions: chosen.iter().map(|&i| i as f64).collect(),
                rewards: out.rewards,
                next_obs: next,
                done: out.done,
            });
            total_steps += 1;
            if buffer.len() >= cfg.warmup.max(cfg.batch_size) && total_steps.is_multiple_of(cfg.update_every) {
                let mb = buffer.sample(cfg.batch_size, &mut replay_rng);
                for j in 0..n {
                    let q_next = target[j].predict(&mb.next_obs)?;
                    let y: Vec<f64> = (0..mb.len())
                        .map(|i| {
                            let best = q_next.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            td_target(mb.rewards.get(i, j), cfg.gamma, best, mb.done[i])
                        })
                        .collect();
                    let taken: Vec<usize> = (0..mb.len()).map(|i| mb.actions.get(i, j) as usize).collect();
                    q_update(&mut q[j], &mut optim[j], &mb.obs, &taken, &y, cfg.max_grad_norm).map_err(|e| match e {
                        AgentError::Divergence(m) => {
                            AgentError::Divergence(format!("episode {episode}, step {total_steps}, agent {j}: {m}"))
                        }
                        other => other,
                    })?;
                    target[j].soft_update_from(&q[j], cfg.tau)?;
                }
            }
        }
        curve.push(EpisodeStats {
            episode,
            scenario: pick,
            mean_reward: reward_sum / n as f64,
            completion: completion_ratio(env.outcomes()),
            cost,
        });
    }
    Ok(MadqnOutcome {
        policy: MadqnPolicy {
            q,
            power_levels: cfg.power_levels.clone(),
            request_levels: cfg.request_levels.clone(),
            featurizer,
            station,
        },
        curve,
    })
}
