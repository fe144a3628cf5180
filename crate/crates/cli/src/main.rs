//! `voltmesh`: train, evaluate and sweep charging-station controllers.

mod commands;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use parse::{FaultArg, ScenarioSource, SweepGrid};

/// Environment variable capping the worker threads used by `sweep`.
pub const THREADS_VAR: &str = "VOLTMESH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "voltmesh", version, about = "Multi-agent EV charging station experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train MADDPG or MADQN and write checkpoints, learning curve and summary.
    Train(TrainArgs),
    /// Run one policy through a scenario and write its trace and metrics.
    Evaluate(EvaluateArgs),
    /// Train over a grid of xi values or station sizes and aggregate the results.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Maddpg,
    Madqn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExplorationArg {
    Noisy,
    ActionNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Batch 256, one update per step, hidden layers of 64 and 128.
    Full,
    /// Smaller networks and batches with an update every fourth step.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ForecastArg {
    Perfect,
    Persistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TriggerArg {
    EveryStep,
    OnArrival,
}

#[derive(Debug, Clone, Args)]
pub struct LearnArgs {
    #[arg(long, value_enum, default_value_t = Algo::Maddpg)]
    pub algo: Algo,
    #[arg(long, value_enum, default_value_t = ExplorationArg::Noisy)]
    pub exploration: ExplorationArg,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Synthetic scenarios drawn per training run.
    #[arg(long, default_value_t = 8)]
    pub pool: usize,
    /// Seed of the first synthetic scenario.
    #[arg(long, default_value_t = 0)]
    pub scenario_seed: u64,
    /// `key = value` file with station, reward and learner settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scenario directory or `synthetic:NxS` (S steps) / `synthetic:NxDd` (D days).
    #[arg(long, value_parser = parse::scenario_source)]
    pub scenario: ScenarioSource,
    #[command(flatten)]
    pub learn: LearnArgs,
    #[arg(long, value_parser = parse::unit_interval)]
    pub xi: Option<f64>,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint directory, `rho` or `uncontrolled`.
    #[arg(long)]
    pub policy: String,
    #[arg(long, value_parser = parse::scenario_source)]
    pub scenario: ScenarioSource,
    #[arg(long, default_value_t = 0)]
    pub scenario_seed: u64,
    /// Corrupt observations, e.g. `step=24,chargers=0,2`.
    #[arg(long, value_parser = parse::fault)]
    pub fault: Option<FaultArg>,
    /// Seed of the fault noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse::unit_interval)]
    pub xi: Option<f64>,
    #[arg(long, value_enum, default_value_t = ForecastArg::Perfect)]
    pub forecast: ForecastArg,
    #[arg(long, value_enum, default_value_t = TriggerArg::EveryStep)]
    pub trigger: TriggerArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `xi=a:b:k` or `size=N1,N2,...`.
    #[arg(long, value_parser = parse::sweep_grid)]
    pub param: SweepGrid,
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Base scenario; a size sweep replaces its charger count.
    #[arg(long, value_parser = parse::scenario_source, default_value = "synthetic:4x1d")]
    pub scenario: ScenarioSource,
    #[command(flatten)]
    pub learn: LearnArgs,
    /// Held-out synthetic scenarios scored after each run.
    #[arg(long, default_value_t = 5)]
    pub eval_scenarios: usize,
    /// Scale installed PV with station size.
    #[arg(long)]
    pub pv_per_charger: Option<f64>,
    /// Scale the grid connection limit with station size.
    #[arg(long)]
    pub grid_per_charger: Option<f64>,
    #[arg(long, default_value = "sweep")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = voltmesh_agents::parallel::threads_from_env(THREADS_VAR) {
        voltmesh_agents::parallel::configure_threads(n);
    }
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
