//! Multi-agent DDPG with centralized critics and decentralized actors.
//!
//! Each agent owns an actor that maps its own observation to an action and a
//! critic that scores the joint observation and joint action. Critics are
//! only used during training; a trained [`MaddpgPolicy`] acts from local
//! observations alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use voltmesh_core::{
    completion_ratio, AgentAction, AgentObservation, Decentralized, EngineOptions, Environment, LocalPolicy,
    Scenario, StationConfig, OBS_DIM,
};
use voltmesh_nn::{Activation, Adam, LayerKind, LayerSpec, Matrix, Network};

use crate::features::{action_from_unit, Featurizer, ACT_DIM};
use crate::replay::{Minibatch, ReplayBuffer, Transition};
use crate::{check_scenarios, AgentError, EpisodeStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Exploration {
    /// Noisy actor layers, resampled every environment step.
    NoisyNet,
    /// Gaussian noise added to actions, standard deviation annealed
    /// linearly over the episodes.
    ActionNoise { sigma_start: f64, sigma_end: f64 },
}

impl Exploration {
    pub fn action_noise() -> Self {
        Exploration::ActionNoise {
            sigma_start: 0.3,
            sigma_end: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub episodes: usize,
    /// Environment steps between gradient updates.
    pub update_every: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub buffer_capacity: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub exploration: Exploration,
    /// Initial noise scale of noisy layers.
    pub sigma_init: f64,
    pub max_grad_norm: Option<f64>,
    /// Reference battery capacity for feature scaling, kWh.
    pub e_ref: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            tau: 0.01,
            batch_size: 256,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            episodes: 500,
            update_every: 1,
            warmup: 1000,
            buffer_capacity: 100_000,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![128, 128],
            exploration: Exploration::NoisyNet,
            sigma_init: voltmesh_nn::DEFAULT_SIGMA_INIT,
            max_grad_norm: Some(10.0),
            e_ref: 40.0,
        }
    }
}

impl TrainConfig {
    /// Smaller networks and sparser updates that train in about a minute on
    /// one core for a two-charger day.
    pub fn desk() -> Self {
        Self {
            batch_size: 64,
            update_every: 4,
            actor_hidden: vec![32, 32],
            critic_hidden: vec![64, 64],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.update_every == 0 || self.buffer_capacity == 0 {
            return bad("batch_size, update_every and buffer_capacity must be positive");
        }
        if !(self.actor_lr >= 0.0 && self.critic_lr >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if let Exploration::ActionNoise { sigma_start, sigma_end } = self.exploration {
            if !(sigma_start >= 0.0 && sigma_end >= 0.0) {
                return bad("action noise must be non-negative");
            }
        }
        Ok(())
    }

    fn exploration_sigma(&self, episode: usize) -> f64 {
        match self.exploration {
            Exploration::NoisyNet => 0.0,
            Exploration::ActionNoise { sigma_start, sigma_end } => {
                let frac = if self.episodes > 1 {
                    episode as f64 / (self.episodes - 1) as f64
                } else {
                    1.0
                };
                sigma_start + (sigma_end - sigma_start) * frac
            }
        }
    }
}

/// Online and target networks of one agent with their optimizers.
#[derive(Debug, Clone)]
pub struct AgentLearner {
    pub actor: Network,
    pub target_actor: Network,
    pub critic: Network,
    pub target_critic: Network,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

fn hidden_specs(hidden: &[usize], kind: LayerKind) -> Vec<LayerSpec> {
    hidden
        .iter()
        .map(|&h| LayerSpec::new(h, kind, Activation::Relu))
        .collect()
}

impl AgentLearner {
    /// `n_agents` sets the critic's joint input width.
    pub fn new<R: Rng + ?Sized>(n_agents: usize, cfg: &TrainConfig, rng: &mut R) -> Self {
        let kind = match cfg.exploration {
            Exploration::NoisyNet => LayerKind::Noisy,
            Exploration::ActionNoise { .. } => LayerKind::Plain,
        };
        let mut a_specs = hidden_specs(&cfg.actor_hidden, kind);
        a_specs.push(LayerSpec::new(ACT_DIM, kind, Activation::Tanh).with_init_bound(3e-3));
        let actor = Network::with_sigma_init(OBS_DIM, &a_specs, cfg.sigma_init, rng);

        let mut c_specs = hidden_specs(&cfg.critic_hidden, LayerKind::Plain);
        c_specs.push(LayerSpec::new(1, LayerKind::Plain, Activation::Identity).with_init_bound(3e-3));
        let critic = Network::new(n_agents * (OBS_DIM + ACT_DIM), &c_specs, rng);

        let mut target_actor = actor.clone();
        target_actor.clear_noise();
        Self {
            actor_opt: Adam::new(&actor, cfg.actor_lr),
            critic_opt: Adam::new(&critic, cfg.critic_lr),
            target_actor,
            target_critic: critic.clone(),
            actor,
            critic,
        }
    }
}

/// One-step bootstrapped target; terminal transitions do not bootstrap.
pub fn td_target(reward: f64, gamma: f64, q_next: f64, done: bool) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_next
    }
}

/// `[obs | actions]` row by row.
pub fn critic_input(obs: &Matrix, actions: &Matrix) -> Matrix {
    let mut x = Matrix::zeros(obs.rows(), obs.cols() + actions.cols());
    x.set_columns(0, obs);
    x.set_columns(obs.cols(), actions);
    x
}

/// Joint actions of the target actors on each agent's next observation.
pub fn target_actions(learners: &[AgentLearner], next_obs: &Matrix) -> Result<Matrix, AgentError> {
    let n = learners.len();
    let mut a = Matrix::zeros(next_obs.rows(), n * ACT_DIM);
    for (k, l) in learners.iter().enumerate() {
        let s = next_obs.columns(k * OBS_DIM, OBS_DIM);
        a.set_columns(k * ACT_DIM, &l.target_actor.predict(&s)?);
    }
    Ok(a)
}

/// TD targets for agent `j` on a minibatch.
pub fn td_targets(
    learners: &[AgentLearner],
    j: usize,
    batch: &Minibatch,
    next_actions: &Matrix,
    gamma: f64,
) -> Result<Vec<f64>, AgentError> {
    let q_next = learners[j]
        .target_critic
        .predict(&critic_input(&batch.next_obs, next_actions))?;
    Ok((0..batch.len())
        .map(|i| td_target(batch.rewards.get(i, j), gamma, q_next.get(i, 0), batch.done[i]))
        .collect())
}

fn clip(g: &mut voltmesh_nn::Gradients, max_norm: Option<f64>) {
    if let Some(m) = max_norm {
        g.clip_global_norm(m);
    }
}

/// One optimizer step on the mean squared TD error. Returns the loss before
/// the step.
pub fn critic_update(
    learner: &mut AgentLearner,
    x: &Matrix,
    targets: &[f64],
    max_norm: Option<f64>,
) -> Result<f64, AgentError> {
    let q = learner.critic.forward_batch(x)?;
    let b = targets.len() as f64;
    let mut upstream = Matrix::zeros(q.rows(), 1);
    let mut loss = 0.0;
    for (i, &y) in targets.iter().enumerate() {
        let d = q.get(i, 0) - y;
        loss += d * d;
        upstream.set(i, 0, 2.0 * d / b);
    }
    loss /= b;
    if !loss.is_finite() {
        return Err(AgentError::Divergence(format!("critic loss is {loss}")));
    }
    let (mut g, _) = learner.critic.backward(&upstream)?;
    clip(&mut g, max_norm);
    learner.critic_opt.step(&mut learner.critic, &g)?;
    Ok(loss)
}

/// Gradient of `-mean Q` with respect to the actor parameters.
///
/// `critic` receives the actor's batch output and returns the per-row values
/// and their derivatives with respect to that output. Returns the mean value
/// and the gradient.
pub fn policy_gradient<F>(
    actor: &mut Network,
    states: &Matrix,
    critic: F,
) -> Result<(f64, voltmesh_nn::Gradients), AgentError>
where
    F: FnOnce(&Matrix) -> Result<(Vec<f64>, Matrix), AgentError>,
{
    let a = actor.forward_batch(states)?;
    let (q, mut dq_da) = critic(&a)?;
    let b = q.len() as f64;
    let objective = q.iter().sum::<f64>() / b;
    if !objective.is_finite() {
        return Err(AgentError::Divergence(format!("actor objective is {objective}")));
    }
    for v in dq_da.as_mut_slice() {
        *v *= -1.0 / b;
    }
    let (g, _) = actor.backward(&dq_da)?;
    Ok((objective, g))
}

/// Agent `j`'s policy gradient through its own critic, with the other
/// agents' actions taken from the batch.
pub fn actor_gradient(
    learner: &mut AgentLearner,
    j: usize,
    batch: &Minibatch,
) -> Result<(f64, voltmesh_nn::Gradients), AgentError> {
    let s_j = batch.obs.columns(j * OBS_DIM, OBS_DIM);
    let critic = &mut learner.critic;
    policy_gradient(&mut learner.actor, &s_j, |a_j| {
        let mut actions = batch.actions.clone();
        actions.set_columns(j * ACT_DIM, a_j);
        let q = critic.forward_batch(&critic_input(&batch.obs, &actions))?;
        let ones = Matrix::from_vec(q.rows(), 1, vec![1.0; q.rows()])?;
        let (_, dx) = critic.backward(&ones)?;
        Ok((q.as_slice().to_vec(), dx.columns(batch.obs.cols() + j * ACT_DIM, ACT_DIM)))
    })
}

/// One ascent step for agent `j`'s actor on its critic's value. Returns the
/// mean value before the step.
pub fn actor_update(
    learner: &mut AgentLearner,
    j: usize,
    batch: &Minibatch,
    max_norm: Option<f64>,
) -> Result<f64, AgentError> {
    let (objective, mut g) = actor_gradient(learner, j, batch)?;
    clip(&mut g, max_norm);
    learner.actor_opt.step(&mut learner.actor, &g)?;
    Ok(objective)
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut Network, online: &Network, tau: f64) -> Result<(), AgentError> {
    target.soft_update_from(online, tau)?;
    Ok(())
}

/// One round of critic, actor and target updates for every agent.
pub fn update_all<R: Rng + ?Sized>(
    learners: &mut [AgentLearner],
    batch: &Minibatch,
    cfg: &TrainConfig,
    noise_rng: &mut R,
) -> Result<(), AgentError> {
    let next_actions = target_actions(learners, &batch.next_obs)?;
    let x = critic_input(&batch.obs, &batch.actions);
    for j in 0..learners.len() {
        let y = td_targets(learners, j, batch, &next_actions, cfg.gamma)?;
        critic_update(&mut learners[j], &x, &y, cfg.max_grad_norm)?;
    }
    for (j, l) in learners.iter_mut().enumerate() {
        if cfg.exploration == Exploration::NoisyNet {
            l.actor.sample_noise(noise_rng);
        }
        actor_update(l, j, batch, cfg.max_grad_norm)?;
    }
    for l in learners.iter_mut() {
        soft_update(&mut l.target_critic, &l.critic, cfg.tau)?;
        soft_update(&mut l.target_actor, &l.actor, cfg.tau)?;
        l.target_actor.clear_noise();
    }
    Ok(())
}

/// Trained decentralized actors.
#[derive(Debug, Clone, PartialEq)]
pub struct MaddpgPolicy {
    pub actors: Vec<Network>,
    pub featurizer: Featurizer,
    pub station: StationConfig,
}

/// A single agent's actor acting on its own observation.
#[derive(Debug, Clone)]
pub struct ActorAgent {
    actor: Network,
    featurizer: Featurizer,
    station: StationConfig,
}

impl ActorAgent {
    pub fn action(&self, obs: &AgentObservation) -> AgentAction {
        let u = self
            .actor
            .forward(&self.featurizer.features(obs))
            .expect("actor input width is fixed");
        action_from_unit(&u, &self.station)
    }
}

impl LocalPolicy for ActorAgent {
    fn act_local(&mut self, obs: &AgentObservation) -> AgentAction {
        self.action(obs)
    }
}

impl MaddpgPolicy {
    pub fn n_agents(&self) -> usize {
        self.actors.len()
    }

    /// The noise-free actor of agent `j`.
    pub fn agent(&self, j: usize) -> ActorAgent {
        let mut actor = self.actors[j].clone();
        actor.clear_noise();
        ActorAgent {
            actor,
            featurizer: self.featurizer,
            station: self.station,
        }
    }

    /// Controller in which every agent sees only its own observation.
    pub fn controller(&self) -> Decentralized<ActorAgent> {
        Decentralized::new((0..self.n_agents()).map(|j| self.agent(j)).collect())
    }
}

pub struct TrainOutcome {
    pub policy: MaddpgPolicy,
    pub learners: Vec<AgentLearner>,
    pub curve: Vec<EpisodeStats>,
}

/// Trains one learner per charger on episodes drawn from `scenarios`.
pub fn train(
    scenarios: &[Scenario],
    cfg: &TrainConfig,
    opts: &EngineOptions,
    seed: u64,
) -> Result<TrainOutcome, AgentError> {
    cfg.validate()?;
    let station = check_scenarios(scenarios)?;
    let n = station.n_chargers;
    let featurizer = Featurizer::for_station(&station, cfg.e_ref);

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut init_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut explore_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut replay_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut pick_rng = ChaCha8Rng::seed_from_u64(master.random());
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut learners: Vec<AgentLearner> = (0..n).map(|_| AgentLearner::new(n, cfg, &mut init_rng)).collect();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut total_steps = 0usize;

    let joint_features = |obs: &[AgentObservation]| -> Vec<f64> {
        obs.iter().flat_map(|o| featurizer.features(o)).collect()
    };

    for episode in 0..cfg.episodes {
        let pick = pick_rng.random_range(0..scenarios.len());
        let scenario = &scenarios[pick];
        let mut env = Environment::new(scenario, *opts)?;
        let sigma = cfg.exploration_sigma(episode);
        let mut obs = joint_features(&env.observe_all());
        let (mut reward_sum, mut cost) = (0.0, 0.0);
        while !env.is_done() {
            let mut unit_actions = Vec::with_capacity(n * ACT_DIM);
            for (j, l) in learners.iter_mut().enumerate() {
                if cfg.exploration == Exploration::NoisyNet {
                    l.actor.sample_noise(&mut explore_rng);
                }
                let mut a = l.actor.forward(&obs[j * OBS_DIM..(j + 1) * OBS_DIM])?;
                if sigma > 0.0 {
                    for v in &mut a {
                        let z: f64 = unit.sample(&mut explore_rng);
                        *v = (*v + sigma * z).clamp(-1.0, 1.0);
                    }
                }
                unit_actions.extend(a);
            }
            let actions: Vec<AgentAction> = unit_actions
                .chunks(ACT_DIM)
                .map(|u| action_from_unit(u, &station))
                .collect();
            let out = env.step(&actions)?;
            let next = joint_features(&env.observe_all());
            reward_sum += out.rewards.iter().sum::<f64>();
            cost += out.cost.total();
            buffer.push(Transition {
                obs: std::mem::replace(&mut obs, next.clone()),
                actions: unit_actions,
                rewards: out.rewards,
                next_obs: next,
                done: out.done,
            });
            total_steps += 1;
            if buffer.len() >= cfg.warmup.max(cfg.batch_size) && total_steps.is_multiple_of(cfg.update_every) {
                let batch = buffer.sample(cfg.batch_size, &mut replay_rng);
                update_all(&mut learners, &batch, cfg, &mut explore_rng).map_err(|e| match e {
                    AgentError::Divergence(m) => {
                        AgentError::Divergence(format!("episode {episode}, step {total_steps}: {m}"))
                    }
                    other => other,
                })?;
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

    let actors = learners
        .iter()
        .map(|l| {
            let mut a = l.actor.clone();
            a.clear_noise();
            a
        })
        .collect();
    Ok(TrainOutcome {
        policy: MaddpgPolicy {
            actors,
            featurizer,
            station,
        },
        learners,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            actor_hidden: vec![8],
            critic_hidden: vec![8, 8],
            exploration: Exploration::action_noise(),
            ..TrainConfig::desk()
        }
    }

    fn batch(rows: usize, n: usize, seed: u64) -> Minibatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |cols: usize, lo: f64, hi: f64| {
            Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
        };
        Minibatch {
            obs: m(n * OBS_DIM, 0.0, 1.0),
            actions: m(n * ACT_DIM, -1.0, 1.0),
            rewards: m(n, -1.0, 0.0),
            next_obs: m(n * OBS_DIM, 0.0, 1.0),
            done: (0..rows).map(|i| i % 2 == 1).collect(),
        }
    }

    fn critic_loss(net: &Network, x: &Matrix, y: &[f64]) -> f64 {
        let q = net.predict(x).unwrap();
        y.iter().enumerate().map(|(i, &t)| (q.get(i, 0) - t).powi(2)).sum::<f64>() / y.len() as f64
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut l = AgentLearner::new(2, &tiny_config(), &mut rng);
        let mb = batch(2, 2, 2);
        let x = critic_input(&mb.obs, &mb.actions);
        let y = [0.4, -1.3];
        let q = l.critic.forward_batch(&x).unwrap();
        let up = Matrix::from_vec(2, 1, (0..2).map(|i| q.get(i, 0) - y[i]).collect()).unwrap();
        let (g, _) = l.critic.backward(&up).unwrap();
        let analytic = g.flatten();
        let theta = l.critic.flat_params();
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut probe = l.critic.clone();
            let mut t = theta.clone();
            t[k] += h;
            probe.set_flat_params(&t).unwrap();
            let up_loss = critic_loss(&probe, &x, &y);
            t[k] -= 2.0 * h;
            probe.set_flat_params(&t).unwrap();
            let down_loss = critic_loss(&probe, &x, &y);
            let numeric = (up_loss - down_loss) / (2.0 * h);
            let err = (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-6);
            assert!(err <= 1e-4, "param {k}: numeric {numeric}, analytic {}", analytic[k]);
        }
    }

    #[test]
    fn critic_overfits_fixed_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut l = AgentLearner::new(1, &tiny_config(), &mut rng);
        let mb = batch(16, 1, 4);
        let x = critic_input(&mb.obs, &mb.actions);
        let y: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let first = critic_update(&mut l, &x, &y, None).unwrap();
        let mut last = first;
        for _ in 0..100 {
            last = critic_update(&mut l, &x, &y, None).unwrap();
        }
        assert!(last < first, "loss {first} -> {last}");
    }

    #[test]
    fn critic_loss_is_zero_on_exact_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut l = AgentLearner::new(1, &tiny_config(), &mut rng);
        let mb = batch(4, 1, 6);
        let x = critic_input(&mb.obs, &mb.actions);
        let y: Vec<f64> = l.critic.predict(&x).unwrap().as_slice().to_vec();
        let before = l.critic.flat_params();
        assert_eq!(critic_update(&mut l, &x, &y, None).unwrap(), 0.0);
        assert_eq!(l.critic.flat_params(), before);
    }

    #[test]
    fn actor_converges_on_quadratic_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let specs = [
            LayerSpec::new(16, LayerKind::Plain, Activation::Relu),
            LayerSpec::new(1, LayerKind::Plain, Activation::Tanh),
        ];
        let mut actor = Network::new(2, &specs, &mut rng);
        let mut opt = Adam::new(&actor, 1e-2);
        let states = Matrix::from_rows(&[[0.2, 0.9], [0.7, 0.1], [0.5, 0.5], [0.0, 1.0]]).unwrap();
        let quadratic = |a: &Matrix| {
            let q = a.as_slice().iter().map(|v| -(v - 0.3) * (v - 0.3)).collect();
            let d = Matrix::from_vec(a.rows(), 1, a.as_slice().iter().map(|v| -2.0 * (v - 0.3)).collect())?;
            Ok((q, d))
        };
        for _ in 0..2000 {
            let (_, g) = policy_gradient(&mut actor, &states, quadratic).unwrap();
            opt.step(&mut actor, &g).unwrap();
        }
        for v in actor.predict(&states).unwrap().as_slice() {
            assert!((v - 0.3).abs() <= 0.01, "actor output {v}");
        }
    }

    #[test]
    fn zero_learning_rate_leaves_actor_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = TrainConfig { actor_lr: 0.0, ..tiny_config() };
        let mut l = AgentLearner::new(2, &cfg, &mut rng);
        let before = l.actor.flat_params();
        actor_update(&mut l, 1, &batch(8, 2, 9), None).unwrap();
        assert_eq!(l.actor.flat_params(), before);
    }

    #[test]
    fn critic_blind_to_own_action_gives_zero_actor_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut l = AgentLearner::new(2, &tiny_config(), &mut rng);
        // Zero the first-layer weights reading agent 0's action columns.
        let out = l.critic.layers()[0].out_dim();
        let mut slices = l.critic.param_slices_mut();
        for c in 2 * OBS_DIM..2 * OBS_DIM + ACT_DIM {
            slices[0][c * out..(c + 1) * out].fill(0.0);
        }
        let (_, g) = actor_gradient(&mut l, 0, &batch(8, 2, 11)).unwrap();
        assert_eq!(g.global_norm(), 0.0);
        let (_, g) = actor_gradient(&mut l, 1, &batch(8, 2, 11)).unwrap();
        assert!(g.global_norm() > 0.0);
    }

    #[test]
    fn td_target_cases() {
        assert_eq!(td_target(1.5, 0.0, 9.0, false), 1.5);
        assert!((td_target(1.0, 0.95, 2.0, false) - 2.9).abs() < 1e-12);
        assert_eq!(td_target(1.0, 0.95, 2.0, true), 1.0);
    }

    #[test]
    fn learners_start_with_equal_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = AgentLearner::new(2, &TrainConfig::desk(), &mut rng);
        assert_eq!(l.actor.flat_params(), l.target_actor.flat_params());
        assert_eq!(l.critic.flat_params(), l.target_critic.flat_params());
        assert_eq!(l.critic.input_dim(), 2 * (OBS_DIM + ACT_DIM));
        assert_eq!(l.actor.input_dim(), OBS_DIM);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { gamma: 1.0, ..TrainConfig::desk() }.validate().is_err());
        assert!(TrainConfig { tau: 0.0, ..TrainConfig::desk() }.validate().is_err());
    }

    #[test]
    fn action_noise_anneals() {
        let cfg = TrainConfig { exploration: Exploration::action_noise(), episodes: 11, ..TrainConfig::desk() };
        assert!((cfg.exploration_sigma(0) - 0.3).abs() < 1e-12);
        assert!((cfg.exploration_sigma(10) - 0.01).abs() < 1e-12);
        assert_eq!(TrainConfig::desk().exploration_sigma(3), 0.0);
    }
}
