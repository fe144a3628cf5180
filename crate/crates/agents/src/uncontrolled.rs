//! Charge at the full rated power whenever an EV is plugged in.

use voltmesh_core::{AgentAction, AgentObservation, Controller, StationConfig, StationView};

/// Full charging power with no V2V or PV preference; zero when empty. The
/// station clamps the request to what the battery can take.
pub fn uncontrolled_action(obs: &AgentObservation, cfg: &StationConfig) -> AgentAction {
    if obs.occupied() {
        AgentAction::new(cfg.p_ch_max, 0.0, 0.0)
    } else {
        AgentAction::ZERO
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Uncontrolled;

impl Controller for Uncontrolled {
    fn act(&mut self, view: &StationView<'_>) -> Vec<AgentAction> {
        view.observations
            .iter()
            .map(|o| uncontrolled_action(o, &view.scenario.config))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use voltmesh_core::{
        clamp_feasible, BatteryDefaults, ChargerSession, ChargerState, EngineOptions, Environment, ExogenousStep,
        Scenario,
    };

    #[test]
    fn empty_and_occupied() {
        let cfg = StationConfig::default();
        assert_eq!(uncontrolled_action(&AgentObservation::default(), &cfg), AgentAction::ZERO);
        let o = AgentObservation { e: 39.9, t_rem: 1.0, e_dem: 40.0, ..Default::default() };
        assert_eq!(uncontrolled_action(&o, &cfg).p_signed, cfg.p_ch_max);
    }

    #[test]
    fn nearly_full_battery_is_clamped_by_station() {
        let cfg = StationConfig { n_chargers: 1, ..Default::default() };
        let s = ChargerSession::with_defaults(0, 0, 0, 4, 40.0, 39.0, 40.0, &BatteryDefaults::default());
        let sc = Scenario { config: cfg, exogenous: vec![ExogenousStep::new(0.2, 0.1, 0.0); 4], sessions: vec![s] };
        let mut env = Environment::new(&sc, EngineOptions::default()).unwrap();
        let a = uncontrolled_action(&env.observe(0).unwrap(), &cfg);
        let out = env.step(&[a]).unwrap();
        // (40 - 39) / (0.95 * 0.25) kW fills the battery exactly.
        let expected = 1.0 / (0.95 * 0.25);
        assert!((out.flows.chargers[0].p_ch - expected).abs() < 1e-9);
        let (clamped, _) = clamp_feasible(&ChargerState::plugged(s), a.p_signed, 0.0, &cfg);
        assert!((clamped - expected).abs() < 1e-9);
        assert!((env.state().chargers[0].energy - 40.0).abs() < 1e-9);
    }
}
