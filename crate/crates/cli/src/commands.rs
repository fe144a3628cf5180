use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use voltmesh_agents::parallel::par_map;
use voltmesh_agents::{
    episodes_to_converge, load_policy, madqn_train, save_policy, train as maddpg_train, AgentError, EpisodeStats,
    Exploration, Forecast, MadqnConfig, RhoConfig, RhoController, RhoTrigger, SavedPolicy, TrainConfig, Uncontrolled,
};
use voltmesh_core::{
    generate_synthetic, load_scenario_dir, rollout, Controller, EngineOptions, EpisodeMetrics, FaultSpec, KvConfig,
    ObservationBounds, Scenario, ScenarioConfig, SyntheticProfile,
};

use crate::parse::{Length, ScenarioSource, SweepGrid};
use crate::{Algo, EvaluateArgs, ExplorationArg, ForecastArg, LearnArgs, Preset, SweepArgs, TrainArgs, TriggerArg};

/// Seed offset separating held-out sweep scenarios from training ones.
const EVAL_SEED_OFFSET: u64 = 1_000_000;

struct Settings {
    scenario: ScenarioConfig,
    engine: EngineOptions,
    learner: Learner,
}

enum Learner {
    Maddpg(TrainConfig),
    Madqn(MadqnConfig),
}

impl Learner {
    fn episodes(&self) -> usize {
        match self {
            Learner::Maddpg(c) => c.episodes,
            Learner::Madqn(c) => c.episodes,
        }
    }
}

fn load_kv(path: Option<&Path>) -> Result<KvConfig> {
    Ok(match path {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::default(),
    })
}

fn take<T: FromStr>(kv: &mut KvConfig, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = kv.take(key)? {
        *slot = v;
    }
    Ok(())
}

fn learner_settings(kv: &mut KvConfig, a: &LearnArgs) -> Result<Learner> {
    Ok(match a.algo {
        Algo::Maddpg => {
            let mut c = match a.preset {
                Preset::Full => TrainConfig::default(),
                Preset::Desk => TrainConfig::desk(),
            };
            c.exploration = match a.exploration {
                ExplorationArg::Noisy => Exploration::NoisyNet,
                ExplorationArg::ActionNoise => Exploration::action_noise(),
            };
            take(kv, "gamma", &mut c.gamma)?;
            take(kv, "tau", &mut c.tau)?;
            take(kv, "batch_size", &mut c.batch_size)?;
            take(kv, "actor_lr", &mut c.actor_lr)?;
            take(kv, "critic_lr", &mut c.critic_lr)?;
            take(kv, "warmup", &mut c.warmup)?;
            take(kv, "update_every", &mut c.update_every)?;
            take(kv, "buffer_capacity", &mut c.buffer_capacity)?;
            take(kv, "sigma_init", &mut c.sigma_init)?;
            take(kv, "e_ref", &mut c.e_ref)?;
            take(kv, "episodes", &mut c.episodes)?;
            if let Some(e) = a.episodes {
                c.episodes = e;
            }
            c.validate()?;
            Learner::Maddpg(c)
        }
        Algo::Madqn => {
            let mut c = MadqnConfig::default();
            take(kv, "gamma", &mut c.gamma)?;
            take(kv, "tau", &mut c.tau)?;
            take(kv, "lr", &mut c.lr)?;
            take(kv, "batch_size", &mut c.batch_size)?;
            take(kv, "warmup", &mut c.warmup)?;
            take(kv, "update_every", &mut c.update_every)?;
            take(kv, "buffer_capacity", &mut c.buffer_capacity)?;
            take(kv, "eps_start", &mut c.eps_start)?;
            take(kv, "eps_end", &mut c.eps_end)?;
            take(kv, "eps_decay", &mut c.eps_decay)?;
            take(kv, "e_ref", &mut c.e_ref)?;
            take(kv, "episodes", &mut c.episodes)?;
            if let Some(e) = a.episodes {
                c.episodes = e;
            }
            c.validate()?;
            Learner::Madqn(c)
        }
    })
}

fn settings(a: &LearnArgs, xi: Option<f64>) -> Result<Settings> {
    let mut kv = load_kv(a.config.as_deref())?;
    let mut scenario = ScenarioConfig::default();
    let mut engine = EngineOptions::default();
    kv.apply_scenario(&mut scenario)?;
    kv.apply_engine(&mut engine)?;
    let learner = learner_settings(&mut kv, a)?;
    kv.finish()?;
    if let Some(x) = xi {
        engine.reward.xi = x;
    }
    Ok(Settings { scenario, engine, learner })
}

/// Scenarios `seed, seed + 1, ...` for a synthetic source; the directory
/// scenario once otherwise.
fn scenarios(src: &ScenarioSource, cfg: &ScenarioConfig, seed: u64, count: usize) -> Result<Vec<Scenario>> {
    if count == 0 {
        bail!("scenario pool is empty");
    }
    match src {
        ScenarioSource::Dir(dir) => {
            let sc = load_scenario_dir(dir, cfg).with_context(|| format!("loading scenario {}", dir.display()))?;
            Ok(vec![sc])
        }
        &ScenarioSource::Synthetic { chargers, length } => {
            let profile = SyntheticProfile {
                station: cfg.station,
                battery: cfg.battery,
                ..SyntheticProfile::default()
            };
            let per_day = profile.steps_per_day();
            let days = match length {
                Length::Days(d) => d,
                Length::Steps(s) => s.div_ceil(per_day),
            };
            Ok((0..count as u64)
                .map(|i| {
                    let sc = generate_synthetic(chargers, days, seed + i, &profile);
                    match length {
                        Length::Steps(s) => sc.truncated(s),
                        Length::Days(_) => sc,
                    }
                })
                .collect())
        }
    }
}

fn with_chargers(src: &ScenarioSource, n: usize) -> Result<ScenarioSource> {
    match src {
        ScenarioSource::Synthetic { length, .. } => Ok(ScenarioSource::Synthetic { chargers: n, length: *length }),
        ScenarioSource::Dir(_) => bail!("a size sweep needs a synthetic scenario"),
    }
}

fn saved_controller(policy: &SavedPolicy) -> Box<dyn Controller> {
    match policy {
        SavedPolicy::Maddpg(p) => Box::new(p.controller()),
        SavedPolicy::Madqn(p) => Box::new(p.clone()),
    }
}

struct Trained {
    policy: SavedPolicy,
    curve: Vec<EpisodeStats>,
}

fn fit(pool: &[Scenario], s: &Settings, seed: u64) -> Result<Trained, AgentError> {
    Ok(match &s.learner {
        Learner::Maddpg(c) => {
            let out = maddpg_train(pool, c, &s.engine, seed)?;
            Trained { policy: SavedPolicy::Maddpg(out.policy), curve: out.curve }
        }
        Learner::Madqn(c) => {
            let out = madqn_train(pool, c, &s.engine, seed)?;
            Trained { policy: SavedPolicy::Madqn(out.policy), curve: out.curve }
        }
    })
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
struct Score {
    cost: f64,
    completion: f64,
    fairness_dispersion: f64,
}

fn score(policy: &SavedPolicy, scenarios: &[Scenario], opts: &EngineOptions) -> Result<Score> {
    let mut total = Score::default();
    for sc in scenarios {
        let mut ctl = saved_controller(policy);
        let m = rollout(sc, ctl.as_mut(), None, 0, opts)?.metrics;
        total.cost += m.total_cost;
        total.completion += m.completion;
        total.fairness_dispersion += m.fairness_dispersion;
    }
    let n = scenarios.len() as f64;
    Ok(Score {
        cost: total.cost / n,
        completion: total.completion / n,
        fairness_dispersion: total.fairness_dispersion / n,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_curve(path: &Path, curve: &[EpisodeStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in curve {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    algo: &'static str,
    exploration: Option<&'static str>,
    seed: u64,
    episodes: usize,
    n_chargers: usize,
    xi: f64,
    /// Greedy policy averaged over the training scenarios.
    final_cost: f64,
    final_completion: f64,
    final_fairness_dispersion: f64,
    /// Mean training reward over the last 50 episodes or fewer.
    tail_mean_reward: f64,
    episodes_to_converge: Option<usize>,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let s = settings(&a.learn, a.xi)?;
    let pool = scenarios(&a.scenario, &s.scenario, a.learn.scenario_seed, a.learn.pool)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let trained = match fit(&pool, &s, a.learn.seed) {
        Ok(t) => t,
        Err(e) => {
            if let AgentError::Divergence(msg) = &e {
                let path = a.out.join("diagnostics.txt");
                let mut w = create(&path)?;
                writeln!(w, "training diverged: {msg}")?;
                writeln!(w, "args: {a:?}")?;
                writeln!(w, "engine: {:?}", s.engine)?;
                w.flush()?;
            }
            return Err(e.into());
        }
    };

    save_policy(&trained.policy, &a.out.join("policy"))?;
    write_curve(&a.out.join("curve.csv"), &trained.curve)?;
    let final_score = score(&trained.policy, &pool, &s.engine)?;
    let tail = &trained.curve[trained.curve.len().saturating_sub(50)..];
    let summary = TrainSummary {
        algo: trained.policy.kind(),
        exploration: match (&s.learner, a.learn.exploration) {
            (Learner::Madqn(_), _) => None,
            (_, ExplorationArg::Noisy) => Some("noisy"),
            (_, ExplorationArg::ActionNoise) => Some("action-noise"),
        },
        seed: a.learn.seed,
        episodes: s.learner.episodes(),
        n_chargers: trained.policy.n_agents(),
        xi: s.engine.reward.xi,
        final_cost: final_score.cost,
        final_completion: final_score.completion,
        final_fairness_dispersion: final_score.fairness_dispersion,
        tail_mean_reward: tail.iter().map(|c| c.mean_reward).sum::<f64>() / tail.len().max(1) as f64,
        episodes_to_converge: episodes_to_converge(&trained.curve, 20, 50, 0.95),
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    println!(
        "trained {} for {} episodes: cost {:.4}, completion {:.4}, fairness dispersion {:.4} -> {}",
        summary.algo,
        summary.episodes,
        summary.final_cost,
        summary.final_completion,
        summary.final_fairness_dispersion,
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    policy: &'a str,
    seed: u64,
    total_cost: f64,
    energy_cost: f64,
    pv_sale: f64,
    battery_cost: f64,
    unattributed_cost: f64,
    completion: f64,
    fairness_dispersion: f64,
    total_reward: f64,
    mean_reward: f64,
    grid_violation_kwh: f64,
    sessions: usize,
}

impl<'a> MetricsRow<'a> {
    fn new(policy: &'a str, seed: u64, m: &EpisodeMetrics) -> Self {
        Self {
            policy,
            seed,
            total_cost: m.total_cost,
            energy_cost: m.energy_cost,
            pv_sale: m.pv_sale,
            battery_cost: m.battery_cost,
            unattributed_cost: m.unattributed_cost,
            completion: m.completion,
            fairness_dispersion: m.fairness_dispersion,
            total_reward: m.total_reward,
            mean_reward: m.mean_reward,
            grid_violation_kwh: m.grid_violation_kwh,
            sessions: m.sessions,
        }
    }
}

#[derive(Serialize)]
struct FaultReport<'a> {
    policy: &'a str,
    /// Each agent acts on its own observation only.
    decentralized: bool,
    fault_step: usize,
    faulty_chargers: &'a [usize],
    steps_checked: usize,
    steps_changed: usize,
    healthy_actions_changed: usize,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut kv = load_kv(a.config.as_deref())?;
    let mut cfg = ScenarioConfig::default();
    let mut engine = EngineOptions::default();
    kv.apply_scenario(&mut cfg)?;
    kv.apply_engine(&mut engine)?;
    kv.finish()?;
    if let Some(x) = a.xi {
        engine.reward.xi = x;
    }
    let sc = scenarios(&a.scenario, &cfg, a.scenario_seed, 1)?.remove(0);

    let (label, decentralized, mut ctl): (String, bool, Box<dyn Controller>) = match a.policy.as_str() {
        "uncontrolled" => ("uncontrolled".into(), true, Box::new(Uncontrolled)),
        "rho" => {
            let rc = RhoConfig {
                forecast: match a.forecast {
                    ForecastArg::Perfect => Forecast::Perfect,
                    ForecastArg::Persistence => Forecast::Persistence,
                },
                trigger: match a.trigger {
                    TriggerArg::EveryStep => RhoTrigger::EveryStep,
                    TriggerArg::OnArrival => RhoTrigger::OnArrival,
                },
                ..RhoConfig::default()
            };
            rc.validate()?;
            ("rho".into(), false, Box::new(RhoController::new(rc)))
        }
        dir => {
            let policy = load_policy(Path::new(dir)).with_context(|| format!("loading checkpoint {dir}"))?;
            if policy.n_agents() != sc.n_chargers() {
                bail!(
                    "checkpoint {dir} has {} agents but the scenario has {} chargers",
                    policy.n_agents(),
                    sc.n_chargers()
                );
            }
            let decentralized = matches!(policy, SavedPolicy::Maddpg(_));
            (policy.kind().into(), decentralized, saved_controller(&policy))
        }
    };

    let fault = a.fault.as_ref().map(|f| FaultSpec {
        fault_step: f.step,
        faulty_chargers: f.chargers.clone(),
        bounds: ObservationBounds::for_scenario(&sc),
    });
    let trace = rollout(&sc, ctl.as_mut(), fault.as_ref(), a.seed, &engine)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut w = create(&a.out.join("trace.jsonl"))?;
    trace.write_jsonl(&mut w)?;
    w.flush()?;
    let mut w = csv::Writer::from_path(a.out.join("metrics.csv"))?;
    w.serialize(MetricsRow::new(&label, a.seed, &trace.metrics))?;
    w.flush()?;

    let m = &trace.metrics;
    println!(
        "{label}: cost {:.4}, completion {:.4}, fairness dispersion {:.4}, grid violation {:.4} kWh",
        m.total_cost, m.completion, m.fairness_dispersion, m.grid_violation_kwh
    );
    if let (Some(f), Some(audit)) = (&fault, &trace.fault_audit) {
        let report = FaultReport {
            policy: &label,
            decentralized,
            fault_step: f.fault_step,
            faulty_chargers: &f.faulty_chargers,
            steps_checked: audit.steps_checked,
            steps_changed: audit.steps_changed,
            healthy_actions_changed: audit.actions_changed,
        };
        write_json(&a.out.join("fault_report.json"), &report)?;
        println!(
            "fault from step {} on chargers {:?}: {} of {} steps changed a healthy action ({} actions)",
            f.fault_step, f.faulty_chargers, audit.steps_changed, audit.steps_checked, audit.actions_changed
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Job {
    point: usize,
    value: f64,
    repeat: usize,
}

#[derive(Debug, Clone, Serialize)]
struct RunRow {
    param: &'static str,
    value: f64,
    repeat: usize,
    seed: u64,
    cost: f64,
    cost_per_charger: f64,
    completion: f64,
    fairness_dispersion: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    param: &'static str,
    value: f64,
    runs: usize,
    cost_mean: f64,
    cost_std: f64,
    cost_per_charger_mean: f64,
    cost_per_charger_std: f64,
    completion_mean: f64,
    completion_std: f64,
    fairness_dispersion_mean: f64,
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn sweep_run(a: &SweepArgs, grid: &SweepGrid, job: Job) -> Result<RunRow> {
    let mut s = settings(&a.learn, None)?;
    let src = match grid {
        SweepGrid::Xi(_) => {
            s.engine.reward.xi = job.value;
            a.scenario.clone()
        }
        SweepGrid::Size(_) => with_chargers(&a.scenario, job.value as usize)?,
    };
    let n = match &src {
        ScenarioSource::Synthetic { chargers, .. } => *chargers,
        ScenarioSource::Dir(_) => s.scenario.station.n_chargers,
    };
    if let Some(pv) = a.pv_per_charger {
        s.scenario.station.pv_capacity = pv * n as f64;
    }
    if let Some(g) = a.grid_per_charger {
        s.scenario.station.g_max = g * n as f64;
    }
    let seed = a.learn.seed + job.repeat as u64;
    let pool = scenarios(&src, &s.scenario, a.learn.scenario_seed, a.learn.pool)?;
    let held_out = match src {
        ScenarioSource::Dir(_) => pool.clone(),
        _ => scenarios(&src, &s.scenario, a.learn.scenario_seed + EVAL_SEED_OFFSET, a.eval_scenarios)?,
    };
    let trained = fit(&pool, &s, seed).with_context(|| format!("{}={} repeat {}", grid.name(), job.value, job.repeat))?;
    let sc = score(&trained.policy, &held_out, &s.engine)?;
    Ok(RunRow {
        param: grid.name(),
        value: job.value,
        repeat: job.repeat,
        seed,
        cost: sc.cost,
        cost_per_charger: sc.cost / n as f64,
        completion: sc.completion,
        fairness_dispersion: sc.fairness_dispersion,
    })
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    if a.param.is_empty() {
        bail!("empty sweep grid");
    }
    if a.repeat == 0 {
        bail!("--repeat must be at least 1");
    }
    if a.eval_scenarios == 0 {
        bail!("--eval-scenarios must be at least 1");
    }
    // Surface config errors once rather than from every worker.
    settings(&a.learn, None)?;
    let values: Vec<f64> = match &a.param {
        SweepGrid::Xi(v) => v.clone(),
        SweepGrid::Size(v) => {
            if matches!(a.scenario, ScenarioSource::Dir(_)) {
                bail!("a size sweep needs a synthetic scenario");
            }
            v.iter().map(|&n| n as f64).collect()
        }
    };
    let jobs: Vec<Job> = values
        .iter()
        .enumerate()
        .flat_map(|(point, &value)| (0..a.repeat).map(move |repeat| Job { point, value, repeat }))
        .collect();
    let runs = par_map(&jobs, |&job| sweep_run(a, &a.param, job).map_err(|e| format!("{e:#}")));
    let runs: Vec<RunRow> = runs.into_iter().collect::<Result<_, _>>().map_err(anyhow::Error::msg)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut w = csv::Writer::from_path(a.out.join("runs.csv"))?;
    for r in &runs {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(a.out.join("sweep.csv"))?;
    for (point, &value) in values.iter().enumerate() {
        let group: Vec<&RunRow> = runs.iter().zip(&jobs).filter(|(_, j)| j.point == point).map(|(r, _)| r).collect();
        let col = |f: fn(&RunRow) -> f64| group.iter().map(|r| f(r)).collect::<Vec<_>>();
        let (cost_mean, cost_std) = mean_std(&col(|r| r.cost));
        let (cpc_mean, cpc_std) = mean_std(&col(|r| r.cost_per_charger));
        let (completion_mean, completion_std) = mean_std(&col(|r| r.completion));
        let (fair_mean, _) = mean_std(&col(|r| r.fairness_dispersion));
        let row = SweepRow {
            param: a.param.name(),
            value,
            runs: group.len(),
            cost_mean,
            cost_std,
            cost_per_charger_mean: cpc_mean,
            cost_per_charger_std: cpc_std,
            completion_mean,
            completion_std,
            fairness_dispersion_mean: fair_mean,
        };
        println!(
            "{}={}: cost {:.4} ± {:.4}, per charger {:.4}, completion {:.4} ± {:.4}",
            row.param, row.value, row.cost_mean, row.cost_std, row.cost_per_charger_mean, row.completion_mean, row.completion_std
        );
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn synthetic_steps_are_truncated() {
        let src = ScenarioSource::Synthetic { chargers: 3, length: Length::Steps(50) };
        let pool = scenarios(&src, &ScenarioConfig::default(), 7, 2).unwrap();
        assert_eq!(pool.len(), 2);
        assert!(pool.iter().all(|s| s.horizon() == 50 && s.n_chargers() == 3));
        assert_ne!(pool[0], pool[1]);
        let days = ScenarioSource::Synthetic { chargers: 1, length: Length::Days(2) };
        assert_eq!(scenarios(&days, &ScenarioConfig::default(), 0, 1).unwrap()[0].horizon(), 192);
    }

    #[test]
    fn learner_keys_are_consumed() {
        let args = LearnArgs {
            algo: Algo::Maddpg,
            exploration: ExplorationArg::ActionNoise,
            preset: Preset::Desk,
            seed: 1,
            episodes: Some(3),
            pool: 1,
            scenario_seed: 0,
            config: None,
        };
        let mut kv = KvConfig::parse("gamma = 0.9\nwarmup = 10\n").unwrap();
        let Learner::Maddpg(c) = learner_settings(&mut kv, &args).unwrap() else { panic!() };
        kv.finish().unwrap();
        assert_eq!((c.gamma, c.warmup, c.episodes), (0.9, 10, 3));
        assert!(matches!(c.exploration, Exploration::ActionNoise { .. }));

        let mut kv = KvConfig::parse("lr = 0.01\n").unwrap();
        assert!(learner_settings(&mut kv, &args).is_ok());
        assert!(kv.finish().is_err(), "lr is a MADQN key");
    }
}
