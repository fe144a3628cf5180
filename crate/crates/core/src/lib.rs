//! EV charging station model.
//!
//! Chargers host EVs for the length of a session. Each step every agent asks
//! for a signed power plus the share it wants from PV and from other EVs; the
//! station resolves those requests into power flows, advances the batteries
//! and pays each agent a reward mixing station cost, charging satisfaction
//! and fairness.

pub mod config;
pub mod dispatch;
pub mod episode;
pub mod metrics;
pub mod scenario;
pub mod station;

pub use config::{ConfigError, KvConfig};
pub use dispatch::{
    allocate, verify_flows, AgentAction, AllocationOptions, AllocationOrder, ChargerFlows, Constraint,
    DispatchError, ExogenousStep, PowerFlows, ShareBasis, Violation, FLOW_TOLERANCE_KW,
};
pub use episode::{
    corrupt_observations, rollout, AgentObservation, Controller, Decentralized, EngineError, EngineOptions,
    Environment, EpisodeMetrics, EpisodeTrace, FairnessMode, FaultAudit, FaultSpec, LocalPolicy,
    ObservationBounds, RewardConfig, StationState, StationView, StepOutcome, StepRecord, TransitionRecord,
    OBS_DIM,
};
pub use metrics::{
    completion_deviation, completion_dispersion, completion_ratio, fairness, satisfaction, satisfaction_at,
    step_cost, FapMode, MetricsError, Satisfaction, SessionOutcome, StepCost,
};
pub use scenario::{
    generate_synthetic, load_scenario, load_scenario_dir, parse_scenario, save_scenario, Scenario,
    ScenarioConfig, ScenarioError, SyntheticProfile,
};
pub use station::{
    clamp_feasible, degradation, step_battery, BatteryDefaults, ChargerSession, ChargerState, DegradationOutcome,
    StationConfig, StationError,
};
