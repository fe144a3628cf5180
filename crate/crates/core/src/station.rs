//! Charger and EV battery physics.
//!
//! Everything here is a pure function over value types. A charger either
//! holds a session (an EV is plugged in) or is empty; an empty charger has
//! zero energy, zero remaining time and can move no power.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed on battery bounds before a step is treated as a bug.
pub const ENERGY_TOLERANCE_KWH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationError {
    #[error("invalid station config: {0}")]
    InvalidConfig(String),
    #[error("invalid session {id}: {reason}")]
    InvalidSession { id: u64, reason: String },
    #[error("battery contract violated: {0}")]
    ContractViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub n_chargers: usize,
    /// Hours per step.
    pub delta_t: f64,
    /// Per-charger charging limit, kW.
    pub p_ch_max: f64,
    /// Per-charger discharging limit, kW.
    pub p_disch_max: f64,
    /// Grid connection limit in each direction, kW.
    pub g_max: f64,
    /// Installed PV, kWp.
    pub pv_capacity: f64,
}

impl Default for StationConfig {
    fn default() -> Self {
        Self {
            n_chargers: 2,
            delta_t: 0.25,
            p_ch_max: 16.0,
            p_disch_max: 16.0,
            g_max: 100.0,
            pv_capacity: 30.0,
        }
    }
}

impl StationConfig {
    pub fn validate(&self) -> Result<(), StationError> {
        let bad = |m: &str| Err(StationError::InvalidConfig(m.to_string()));
        if self.n_chargers < 1 {
            return bad("n_chargers must be at least 1");
        }
        if !(self.delta_t > 0.0 && self.delta_t <= 1.0) {
            return bad("delta_t must lie in (0, 1] hours");
        }
        for (name, v) in [
            ("p_ch_max", self.p_ch_max),
            ("p_disch_max", self.p_disch_max),
            ("g_max", self.g_max),
            ("pv_capacity", self.pv_capacity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(StationError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Battery parameters applied to sessions whose data does not carry them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryDefaults {
    pub e_cap: f64,
    /// Lower energy bound as a fraction of capacity.
    pub e_min_frac: f64,
    /// Upper energy bound as a fraction of capacity.
    pub e_max_frac: f64,
    pub eta_ch: f64,
    pub eta_disch: f64,
    pub l_cyc: f64,
    pub kappa_batt: f64,
}

impl Default for BatteryDefaults {
    fn default() -> Self {
        Self {
            e_cap: 40.0,
            e_min_frac: 0.0,
            e_max_frac: 1.0,
            eta_ch: 0.95,
            eta_disch: 0.95,
            l_cyc: 3000.0,
            kappa_batt: 6000.0,
        }
    }
}

/// One EV visit to one charger.
///
/// `e_demand` is the energy level the owner wants at departure, on the same
/// scale as `e_init`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargerSession {
    pub id: u64,
    pub charger_id: usize,
    pub arrival_step: usize,
    pub departure_step: usize,
    pub e_demand: f64,
    pub e_init: f64,
    pub e_cap: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub eta_ch: f64,
    pub eta_disch: f64,
    pub l_cyc: f64,
    pub kappa_batt: f64,
}

impl ChargerSession {
    /// Session using `defaults` for everything the raw data does not carry.
    #[allow(clippy::too_many_arguments)]
    pub fn with_defaults(
        id: u64,
        charger_id: usize,
        arrival_step: usize,
        departure_step: usize,
        e_demand: f64,
        e_init: f64,
        e_cap: f64,
        defaults: &BatteryDefaults,
    ) -> Self {
        Self {
            id,
            charger_id,
            arrival_step,
            departure_step,
            e_demand,
            e_init,
            e_cap,
            e_min: defaults.e_min_frac * e_cap,
            e_max: defaults.e_max_frac * e_cap,
            eta_ch: defaults.eta_ch,
            eta_disch: defaults.eta_disch,
            l_cyc: defaults.l_cyc,
            kappa_batt: defaults.kappa_batt,
        }
    }

    pub fn stay_steps(&self) -> usize {
        self.departure_step - self.arrival_step
    }

    pub fn validate(&self) -> Result<(), StationError> {
        let bad = |reason: &str| {
            Err(StationError::InvalidSession {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        let all = [
            self.e_demand,
            self.e_init,
            self.e_cap,
            self.e_min,
            self.e_max,
            self.eta_ch,
            self.eta_disch,
            self.l_cyc,
            self.kappa_batt,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        if self.arrival_step >= self.departure_step {
            return bad("arrival must precede departure");
        }
        if self.e_cap <= 0.0 {
            return bad("capacity must be positive");
        }
        if !(0.0 <= self.e_min
            && self.e_min <= self.e_init
            && self.e_init <= self.e_max
            && self.e_max <= self.e_cap)
        {
            return bad("need 0 <= e_min <= e_init <= e_max <= e_cap");
        }
        if !(self.e_min <= self.e_demand && self.e_demand <= self.e_max) {
            return bad("demand outside [e_min, e_max]");
        }
        for eta in [self.eta_ch, self.eta_disch] {
            if !(eta > 0.0 && eta <= 1.0) {
                return bad("efficiencies must lie in (0, 1]");
            }
        }
        if self.l_cyc <= 0.0 || self.kappa_batt < 0.0 {
            return bad("cycle life must be positive and battery cost non-negative");
        }
        Ok(())
    }
}

/// State of one charger at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChargerState {
    /// Battery energy, kWh.
    pub energy: f64,
    /// Steps until departure.
    pub remaining_steps: usize,
    pub session: Option<ChargerSession>,
}

impl ChargerState {
    pub fn empty() -> Self {
        Self::default()
    }

    /// A freshly plugged-in EV.
    pub fn plugged(session: ChargerSession) -> Self {
        Self {
            energy: session.e_init,
            remaining_steps: session.stay_steps(),
            session: Some(session),
        }
    }

    pub fn occupied(&self) -> bool {
        self.session.is_some()
    }

    pub fn remaining_hours(&self, cfg: &StationConfig) -> f64 {
        self.remaining_steps as f64 * cfg.delta_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DegradationOutcome {
    /// Equivalent full cycles consumed this step.
    pub efc: f64,
    /// Fraction of cycle life consumed.
    pub age_frac: f64,
    pub cost: f64,
}

/// Largest charge and discharge powers the battery can accept this step.
///
/// Returns `(0, 0)` for an empty charger. Negative or NaN requests count as 0.
pub fn clamp_feasible(
    state: &ChargerState,
    p_ch: f64,
    p_disch: f64,
    cfg: &StationConfig,
) -> (f64, f64) {
    let Some(s) = &state.session else {
        return (0.0, 0.0);
    };
    let p_ch = if p_ch > 0.0 { p_ch } else { 0.0 };
    let p_disch = if p_disch > 0.0 { p_disch } else { 0.0 };
    let ch_room = ((s.e_max - state.energy) / (s.eta_ch * cfg.delta_t)).max(0.0);
    let disch_room = ((state.energy - s.e_min) * s.eta_disch / cfg.delta_t).max(0.0);
    (
        p_ch.min(cfg.p_ch_max).min(ch_room),
        p_disch.min(cfg.p_disch_max).min(disch_room),
    )
}

/// Advances one battery by one step and counts down its stay.
///
/// Powers must already be feasible; anything else is reported as a contract
/// violation because it means the dispatcher produced an impossible flow.
pub fn step_battery(
    state: &ChargerState,
    p_ch: f64,
    p_disch: f64,
    cfg: &StationConfig,
) -> Result<ChargerState, StationError> {
    if !(p_ch >= 0.0 && p_disch >= 0.0) {
        return Err(StationError::ContractViolation(format!(
            "powers must be non-negative (p_ch={p_ch}, p_disch={p_disch})"
        )));
    }
    if p_ch > 0.0 && p_disch > 0.0 {
        return Err(StationError::ContractViolation(
            "simultaneous charge and discharge".into(),
        ));
    }
    let Some(s) = &state.session else {
        if p_ch > 0.0 || p_disch > 0.0 {
            return Err(StationError::ContractViolation(
                "power requested on an empty charger".into(),
            ));
        }
        return Ok(ChargerState::empty());
    };
    let energy = state.energy + p_ch * s.eta_ch * cfg.delta_t - p_disch * cfg.delta_t / s.eta_disch;
    if energy > s.e_max + ENERGY_TOLERANCE_KWH || energy < s.e_min - ENERGY_TOLERANCE_KWH {
        return Err(StationError::ContractViolation(format!(
            "energy {energy} kWh leaves [{}, {}] on charger {}",
            s.e_min, s.e_max, s.charger_id
        )));
    }
    Ok(ChargerState {
        energy: energy.clamp(s.e_min, s.e_max),
        remaining_steps: state.remaining_steps.saturating_sub(1),
        session: state.session,
    })
}

/// Cycle-ageing cost of one step by the energy-throughput method.
pub fn degradation(
    p_ch: f64,
    p_disch: f64,
    session: &ChargerSession,
    delta_t: f64,
) -> Result<DegradationOutcome, StationError> {
    if session.e_cap <= 0.0 {
        return Err(StationError::InvalidSession {
            id: session.id,
            reason: "capacity must be positive".into(),
        });
    }
    let throughput = (p_ch * session.eta_ch * delta_t - p_disch * delta_t / session.eta_disch).abs();
    let efc = 0.5 * throughput / session.e_cap;
    let age_frac = efc / session.l_cyc;
    Ok(DegradationOutcome {
        efc,
        age_frac,
        cost: age_frac * session.kappa_batt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn session() -> ChargerSession {
        ChargerSession::with_defaults(1, 0, 0, 40, 30.0, 10.0, 40.0, &BatteryDefaults::default())
    }

    fn state(energy: f64) -> ChargerState {
        ChargerState {
            energy,
            ..ChargerState::plugged(session())
        }
    }

    #[test]
    fn charging_step_matches_hand_value() {
        let cfg = StationConfig::default();
        let next = step_battery(&state(10.0), 16.0, 0.0, &cfg).unwrap();
        assert!((next.energy - 13.8).abs() < 1e-12);
        assert_eq!(next.remaining_steps, 39);
    }

    #[test]
    fn discharging_step_matches_hand_value() {
        let cfg = StationConfig::default();
        let next = step_battery(&state(13.8), 0.0, 8.0, &cfg).unwrap();
        // 13.8 - 8 * 0.25 / 0.95
        assert!((next.energy - 11.694_736_842_105_264).abs() < 1e-12);
    }

    #[test]
    fn idle_step_keeps_energy() {
        let cfg = StationConfig::default();
        let next = step_battery(&state(17.5), 0.0, 0.0, &cfg).unwrap();
        assert_eq!(next.energy, 17.5);
    }

    #[test]
    fn step_rejects_overcharge_and_simultaneous_flows() {
        let cfg = StationConfig::default();
        assert!(matches!(
            step_battery(&state(39.9), 16.0, 0.0, &cfg),
            Err(StationError::ContractViolation(_))
        ));
        assert!(step_battery(&state(20.0), 1.0, 1.0, &cfg).is_err());
        assert!(step_battery(&ChargerState::empty(), 1.0, 0.0, &cfg).is_err());
        assert_eq!(
            step_battery(&ChargerState::empty(), 0.0, 0.0, &cfg).unwrap(),
            ChargerState::empty()
        );
    }

    #[test]
    fn clamp_on_empty_charger_is_zero() {
        let cfg = StationConfig::default();
        assert_eq!(clamp_feasible(&ChargerState::empty(), 16.0, 5.0, &cfg), (0.0, 0.0));
    }

    #[test]
    fn clamp_near_full_battery() {
        let cfg = StationConfig::default();
        let (p, _) = clamp_feasible(&state(39.0), 16.0, 0.0, &cfg);
        assert!((p - 1.0 / (0.95 * 0.25)).abs() < 1e-12);
        assert!((p - 4.210_526_315_789_474).abs() < 1e-12);
    }

    #[test]
    fn clamp_interior_discharge_is_untouched() {
        let cfg = StationConfig::default();
        assert_eq!(clamp_feasible(&state(20.0), 0.0, 16.0, &cfg), (0.0, 16.0));
    }

    #[test]
    fn degradation_matches_hand_values() {
        let d = degradation(16.0, 0.0, &session(), 0.25).unwrap();
        assert!((d.efc - 0.0475).abs() < 1e-15);
        assert!((d.age_frac - 1.583_333_333_333_333_4e-5).abs() < 1e-18);
        assert!((d.cost - 0.095).abs() < 1e-12);
        assert_eq!(degradation(0.0, 0.0, &session(), 0.25).unwrap(), DegradationOutcome::default());
        let mut bad = session();
        bad.e_cap = 0.0;
        assert!(degradation(1.0, 0.0, &bad, 0.25).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(StationConfig::default().validate().is_ok());
        let mut c = StationConfig { delta_t: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        c = StationConfig { n_chargers: 0, ..Default::default() };
        assert!(c.validate().is_err());
        c = StationConfig { g_max: -1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn session_validation() {
        assert!(session().validate().is_ok());
        let mut s = session();
        s.e_demand = 41.0;
        assert!(s.validate().is_err());
        s = session();
        s.departure_step = 0;
        assert!(s.validate().is_err());
        s = session();
        s.eta_ch = 1.2;
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn clamped_steps_stay_within_bounds(
            energy in 0.0f64..40.0,
            p_ch in 0.0f64..50.0,
            p_disch in 0.0f64..50.0,
            charge in any::<bool>(),
            eta_ch in 0.5f64..1.0,
            eta_d in 0.5f64..1.0,
            dt in 0.01f64..1.0,
        ) {
            let cfg = StationConfig { delta_t: dt, ..Default::default() };
            let mut s = state(energy);
            let sess = s.session.as_mut().unwrap();
            sess.eta_ch = eta_ch;
            sess.eta_disch = eta_d;
            let (c, d) = clamp_feasible(&s, if charge { p_ch } else { 0.0 }, if charge { 0.0 } else { p_disch }, &cfg);
            let next = step_battery(&s, c, d, &cfg).unwrap();
            prop_assert!(next.energy >= 0.0 - ENERGY_TOLERANCE_KWH);
            prop_assert!(next.energy <= 40.0 + ENERGY_TOLERANCE_KWH);
        }

        #[test]
        fn lossless_battery_conserves_energy(energy in 5.0f64..35.0, p in -16.0f64..16.0) {
            let cfg = StationConfig::default();
            let mut s = state(energy);
            let sess = s.session.as_mut().unwrap();
            sess.eta_ch = 1.0;
            sess.eta_disch = 1.0;
            let (c, d) = (p.max(0.0), (-p).max(0.0));
            let next = step_battery(&s, c, d, &cfg).unwrap();
            prop_assert!(((next.energy - energy) - (c - d) * cfg.delta_t).abs() < 1e-12);
        }

        #[test]
        fn degradation_depends_only_on_throughput(kwh in 0.0f64..4.0) {
            let s = session();
            let dt = 0.25;
            let p_ch = kwh / (s.eta_ch * dt);
            let p_disch = kwh * s.eta_disch / dt;
            let a = degradation(p_ch, 0.0, &s, dt).unwrap();
            let b = degradation(0.0, p_disch, &s, dt).unwrap();
            prop_assert!((a.efc - b.efc).abs() < 1e-12);
        }
    }
}
