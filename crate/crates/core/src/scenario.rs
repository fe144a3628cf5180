//! Scenario data: CSV ingestion, export and a synthetic generator.
//!
//! Three files describe a scenario, all with fixed headers:
//!
//! ```text
//! sessions.csv  session_id,charger_id,arrival_step,departure_step,e_demand_kwh,e_init_kwh,e_cap_kwh
//! prices.csv    step,buy,sell
//! solar.csv     step,gen_kw
//! ```
//!
//! `prices.csv` and `solar.csv` list steps `0..horizon` in order. Battery
//! parameters not present in `sessions.csv` come from [`BatteryDefaults`].

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::ExogenousStep;
use crate::station::{BatteryDefaults, ChargerSession, StationConfig};

pub const SESSIONS_HEADER: [&str; 7] = [
    "session_id",
    "charger_id",
    "arrival_step",
    "departure_step",
    "e_demand_kwh",
    "e_init_kwh",
    "e_cap_kwh",
];
pub const PRICES_HEADER: [&str; 3] = ["step", "buy", "sell"];
pub const SOLAR_HEADER: [&str; 2] = ["step", "gen_kw"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file}: expected header `{expected}`, found `{found}`")]
    Header {
        file: String,
        expected: String,
        found: String,
    },
    #[error("{file} line {line}: {message}")]
    Row {
        file: String,
        line: u64,
        message: String,
    },
    #[error("sessions.csv: sessions on charger {charger} overlap (lines {first_line} and {second_line})")]
    Overlap {
        charger: usize,
        first_line: u64,
        second_line: u64,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Station parameters plus battery defaults used when loading sessions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub station: StationConfig,
    pub battery: BatteryDefaults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: StationConfig,
    pub exogenous: Vec<ExogenousStep>,
    /// Sorted by arrival step, then charger.
    pub sessions: Vec<ChargerSession>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.exogenous.len()
    }

    pub fn n_chargers(&self) -> usize {
        self.config.n_chargers
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.config
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.exogenous.is_empty() {
            return Err(ScenarioError::Invalid("empty horizon".into()));
        }
        for (t, ex) in self.exogenous.iter().enumerate() {
            ex.validate()
                .map_err(|m| ScenarioError::Invalid(format!("step {t}: {m}")))?;
        }
        let mut last_departure: Vec<Option<(usize, u64)>> = vec![None; self.config.n_chargers];
        for (k, s) in self.sessions.iter().enumerate() {
            s.validate()
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            if s.charger_id >= self.config.n_chargers {
                return Err(ScenarioError::Invalid(format!(
                    "session {} uses charger {} but the station has {}",
                    s.id, s.charger_id, self.config.n_chargers
                )));
            }
            if s.departure_step > self.horizon() {
                return Err(ScenarioError::Invalid(format!(
                    "session {} departs at step {} after the horizon {}",
                    s.id,
                    s.departure_step,
                    self.horizon()
                )));
            }
            if k > 0 {
                let p = &self.sessions[k - 1];
                if (p.arrival_step, p.charger_id) > (s.arrival_step, s.charger_id) {
                    return Err(ScenarioError::Invalid("sessions are not sorted by arrival".into()));
                }
            }
            if let Some((dep, id)) = last_departure[s.charger_id] {
                if s.arrival_step < dep {
                    return Err(ScenarioError::Invalid(format!(
                        "sessions {id} and {} overlap on charger {}",
                        s.id, s.charger_id
                    )));
                }
            }
            last_departure[s.charger_id] = Some((s.departure_step, s.id));
        }
        Ok(())
    }

    /// Keeps the first `horizon` steps; later arrivals are dropped and
    /// departures are cut at the new horizon.
    pub fn truncated(&self, horizon: usize) -> Scenario {
        let horizon = horizon.min(self.horizon());
        let sessions = self
            .sessions
            .iter()
            .filter(|s| s.arrival_step < horizon)
            .map(|s| ChargerSession {
                departure_step: s.departure_step.min(horizon),
                ..*s
            })
            .collect();
        Scenario {
            config: self.config,
            exogenous: self.exogenous[..horizon].to_vec(),
            sessions,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<String, ScenarioError> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| io_err(path, e))?;
    Ok(s)
}

struct Table {
    file: &'static str,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(file: &'static str, text: &str, header: &[&str]) -> Result<Table, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = rdr
        .headers()
        .map_err(|e| ScenarioError::Row {
            file: file.into(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(ScenarioError::Header {
            file: file.into(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ScenarioError::Row {
            file: file.into(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok(Table { file, rows })
}

impl Table {
    fn err(&self, line: u64, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Row {
            file: self.file.into(),
            line,
            message: message.into(),
        }
    }

    fn field<T: std::str::FromStr>(&self, line: u64, rec: &csv::StringRecord, col: usize, name: &str) -> Result<T, ScenarioError> {
        let raw = rec.get(col).unwrap_or("");
        raw.parse()
            .map_err(|_| self.err(line, format!("cannot parse {name} from `{raw}`")))
    }

    fn float(&self, line: u64, rec: &csv::StringRecord, col: usize, name: &str) -> Result<f64, ScenarioError> {
        let v: f64 = self.field(line, rec, col, name)?;
        if !v.is_finite() {
            return Err(self.err(line, format!("{name} is not finite")));
        }
        Ok(v)
    }

    fn check_steps(&self) -> Result<(), ScenarioError> {
        for (k, (line, rec)) in self.rows.iter().enumerate() {
            let step: usize = self.field(*line, rec, 0, "step")?;
            if step != k {
                return Err(self.err(*line, format!("expected step {k}, found {step}")));
            }
        }
        Ok(())
    }
}

/// Parses scenario CSV text. File names in errors are the canonical ones.
pub fn parse_scenario(
    sessions_csv: &str,
    prices_csv: &str,
    solar_csv: &str,
    config: &ScenarioConfig,
) -> Result<Scenario, ScenarioError> {
    config
        .station
        .validate()
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

    let prices = read_table("prices.csv", prices_csv, &PRICES_HEADER)?;
    prices.check_steps()?;
    let solar = read_table("solar.csv", solar_csv, &SOLAR_HEADER)?;
    solar.check_steps()?;
    if prices.rows.len() != solar.rows.len() {
        return Err(ScenarioError::Invalid(format!(
            "prices.csv has {} steps but solar.csv has {}",
            prices.rows.len(),
            solar.rows.len()
        )));
    }
    if prices.rows.is_empty() {
        return Err(ScenarioError::Invalid("prices.csv has no rows".into()));
    }
    let mut exogenous = Vec::with_capacity(prices.rows.len());
    for ((pl, pr), (sl, sr)) in prices.rows.iter().zip(&solar.rows) {
        let buy = prices.float(*pl, pr, 1, "buy")?;
        let sell = prices.float(*pl, pr, 2, "sell")?;
        if buy < 0.0 || sell < 0.0 {
            return Err(prices.err(*pl, "negative price"));
        }
        if sell > buy {
            return Err(prices.err(*pl, "sell price exceeds buy price"));
        }
        let gen = solar.float(*sl, sr, 1, "gen_kw")?;
        if gen < 0.0 {
            return Err(solar.err(*sl, "negative generation"));
        }
        exogenous.push(ExogenousStep::new(buy, sell, gen));
    }
    let horizon = exogenous.len();

    let table = read_table("sessions.csv", sessions_csv, &SESSIONS_HEADER)?;
    let mut sessions: Vec<(u64, ChargerSession)> = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let id: u64 = table.field(line, rec, 0, "session_id")?;
        let charger: usize = table.field(line, rec, 1, "charger_id")?;
        let arrival: usize = table.field(line, rec, 2, "arrival_step")?;
        let departure: usize = table.field(line, rec, 3, "departure_step")?;
        let demand = table.float(line, rec, 4, "e_demand_kwh")?;
        let init = table.float(line, rec, 5, "e_init_kwh")?;
        let cap = table.float(line, rec, 6, "e_cap_kwh")?;
        if demand < 0.0 || init < 0.0 || cap <= 0.0 {
            return Err(table.err(line, "energies must be non-negative and capacity positive"));
        }
        if charger >= config.station.n_chargers {
            return Err(table.err(
                line,
                format!("charger {charger} out of range for {} chargers", config.station.n_chargers),
            ));
        }
        if departure > horizon {
            return Err(table.err(line, format!("departure {departure} beyond horizon {horizon}")));
        }
        let s = ChargerSession::with_defaults(id, charger, arrival, departure, demand, init, cap, &config.battery);
        s.validate().map_err(|e| table.err(line, e.to_string()))?;
        sessions.push((line, s));
    }
    sessions.sort_by_key(|(_, s)| (s.charger_id, s.arrival_step));
    for w in sessions.windows(2) {
        let (l0, a) = &w[0];
        let (l1, b) = &w[1];
        if a.charger_id == b.charger_id && b.arrival_step < a.departure_step {
            return Err(ScenarioError::Overlap {
                charger: a.charger_id,
                first_line: (*l0).min(*l1),
                second_line: (*l0).max(*l1),
            });
        }
    }
    sessions.sort_by_key(|(_, s)| (s.arrival_step, s.charger_id));
    let scenario = Scenario {
        config: config.station,
        exogenous,
        sessions: sessions.into_iter().map(|(_, s)| s).collect(),
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(
    sessions: &Path,
    prices: &Path,
    solar: &Path,
    config: &ScenarioConfig,
) -> Result<Scenario, ScenarioError> {
    parse_scenario(&open(sessions)?, &open(prices)?, &open(solar)?, config)
}

/// Loads `sessions.csv`, `prices.csv` and `solar.csv` from `dir`.
pub fn load_scenario_dir(dir: &Path, config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    let (a, b, c) = scenario_paths(dir);
    load_scenario(&a, &b, &c, config)
}

pub fn scenario_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join("sessions.csv"), dir.join("prices.csv"), dir.join("solar.csv"))
}

/// Writes the three CSV files into `dir`, creating it if needed.
pub fn save_scenario(scenario: &Scenario, dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let (sp, pp, gp) = scenario_paths(dir);
    let write = |path: &Path, header: &[&str], rows: Vec<Vec<String>>| -> Result<(), ScenarioError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(header).map_err(|e| io_err(path, e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    };
    write(
        &sp,
        &SESSIONS_HEADER,
        scenario
            .sessions
            .iter()
            .map(|s| {
                vec![
                    s.id.to_string(),
                    s.charger_id.to_string(),
                    s.arrival_step.to_string(),
                    s.departure_step.to_string(),
                    s.e_demand.to_string(),
                    s.e_init.to_string(),
                    s.e_cap.to_string(),
                ]
            })
            .collect(),
    )?;
    write(
        &pp,
        &PRICES_HEADER,
        scenario
            .exogenous
            .iter()
            .enumerate()
            .map(|(t, e)| vec![t.to_string(), e.kappa_buy.to_string(), e.kappa_sell.to_string()])
            .collect(),
    )?;
    write(
        &gp,
        &SOLAR_HEADER,
        scenario
            .exogenous
            .iter()
            .enumerate()
            .map(|(t, e)| vec![t.to_string(), e.pv_gen.to_string()])
            .collect(),
    )
}

/// Shape of generated scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    /// Template; `n_chargers` is overridden by the generator.
    pub station: StationConfig,
    pub battery: BatteryDefaults,
    /// Expected arrivals per charger per day.
    pub arrivals_per_day: f64,
    pub arrival_peak_hour: f64,
    pub arrival_spread_hours: f64,
    pub stay_hours: (f64, f64),
    /// Requested energy per visit, kWh.
    pub demand_kwh: (f64, f64),
    /// Initial state of charge as a fraction of capacity.
    pub init_soc: (f64, f64),
    pub tou_offpeak: f64,
    pub tou_shoulder: f64,
    pub tou_peak: f64,
    pub wholesale_base: f64,
    pub wholesale_amplitude: f64,
    pub wholesale_peak_hour: f64,
    pub wholesale_noise: f64,
    /// Daily clear-sky factor range.
    pub cloud_factor: (f64, f64),
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self {
            station: StationConfig::default(),
            battery: BatteryDefaults::default(),
            arrivals_per_day: 1.5,
            arrival_peak_hour: 9.5,
            arrival_spread_hours: 2.5,
            stay_hours: (2.0, 10.0),
            demand_kwh: (5.0, 35.0),
            init_soc: (0.1, 0.4),
            tou_offpeak: 0.12,
            tou_shoulder: 0.24,
            tou_peak: 0.42,
            wholesale_base: 0.08,
            wholesale_amplitude: 0.04,
            wholesale_peak_hour: 19.0,
            wholesale_noise: 0.01,
            cloud_factor: (0.6, 1.0),
        }
    }
}

impl SyntheticProfile {
    pub fn steps_per_day(&self) -> usize {
        (24.0 / self.station.delta_t).round() as usize
    }

    /// Three-tier time-of-use tariff.
    pub fn tou_price(&self, hour: f64) -> f64 {
        let h = hour.rem_euclid(24.0);
        if (16.0..21.0).contains(&h) {
            self.tou_peak
        } else if (7.0..22.0).contains(&h) {
            self.tou_shoulder
        } else {
            self.tou_offpeak
        }
    }

    /// Clear-sky PV shape in [0, 1], zero outside 06:00-18:00.
    pub fn solar_shape(hour: f64) -> f64 {
        let h = hour.rem_euclid(24.0);
        if h <= 6.0 || h >= 18.0 {
            0.0
        } else {
            (std::f64::consts::PI * (h - 6.0) / 12.0).sin()
        }
    }
}

/// Random scenario with `days` whole days at the profile's step length.
pub fn generate_synthetic(n_chargers: usize, days: usize, seed: u64, profile: &SyntheticProfile) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = StationConfig {
        n_chargers,
        ..profile.station
    };
    let dt = config.delta_t;
    let per_day = profile.steps_per_day();
    let horizon = per_day * days.max(1);

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut exogenous = Vec::with_capacity(horizon);
    for _ in 0..days.max(1) {
        let cloud = rng.random_range(profile.cloud_factor.0..=profile.cloud_factor.1);
        for k in 0..per_day {
            let hour = (k as f64 + 0.5) * dt;
            let buy = profile.tou_price(hour);
            let phase = 2.0 * std::f64::consts::PI * (hour - profile.wholesale_peak_hour) / 24.0;
            let noise: f64 = unit.sample(&mut rng);
            let sell = (profile.wholesale_base
                + profile.wholesale_amplitude * phase.cos()
                + profile.wholesale_noise * noise)
                .clamp(0.0, buy);
            let wobble: f64 = unit.sample(&mut rng);
            let shape = SyntheticProfile::solar_shape(hour);
            let pv = if shape > 0.0 {
                (config.pv_capacity * cloud * shape * (1.0 + 0.05 * wobble)).max(0.0)
            } else {
                0.0
            };
            exogenous.push(ExogenousStep::new(buy, sell, pv));
        }
    }

    let arrivals = Poisson::new(profile.arrivals_per_day.max(1e-9)).expect("positive rate");
    let arrival_hour = Normal::new(profile.arrival_peak_hour, profile.arrival_spread_hours).expect("finite spread");
    let mut sessions = Vec::new();
    for charger in 0..n_chargers {
        let mut free_at = 0usize;
        for d in 0..days.max(1) {
            let k = arrivals.sample(&mut rng) as usize;
            let mut hours: Vec<f64> = (0..k)
                .map(|_| arrival_hour.sample(&mut rng).clamp(0.0, 23.0))
                .collect();
            hours.sort_by(f64::total_cmp);
            for h in hours {
                let stay = rng.random_range(profile.stay_hours.0..=profile.stay_hours.1);
                let amount = rng.random_range(profile.demand_kwh.0..=profile.demand_kwh.1);
                let soc = rng.random_range(profile.init_soc.0..=profile.init_soc.1);
                let arrival = d * per_day + (h / dt).floor() as usize;
                let departure = (arrival + (stay / dt).round().max(1.0) as usize).min(horizon);
                if arrival < free_at || departure <= arrival + 1 {
                    continue;
                }
                let cap = profile.battery.e_cap;
                let e_min = profile.battery.e_min_frac * cap;
                let e_max = profile.battery.e_max_frac * cap;
                let e_init = (cap * soc).clamp(e_min, e_max);
                let e_demand = (e_init + amount).min(e_max);
                sessions.push(ChargerSession::with_defaults(
                    0, charger, arrival, departure, e_demand, e_init, cap, &profile.battery,
                ));
                free_at = departure;
            }
        }
    }
    sessions.sort_by_key(|s| (s.arrival_step, s.charger_id));
    for (i, s) in sessions.iter_mut().enumerate() {
        s.id = i as u64;
    }
    Scenario {
        config,
        exogenous,
        sessions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SESSIONS: &str = "session_id,charger_id,arrival_step,departure_step,e_demand_kwh,e_init_kwh,e_cap_kwh\n";
    const PRICES: &str = "step,buy,sell\n0,0.4,0.1\n1,0.4,0.1\n2,0.2,0.05\n3,0.2,0.05\n";
    const SOLAR: &str = "step,gen_kw\n0,0\n1,5\n2,10\n3,0\n";

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn minimal_scenario_loads() {
        let s = format!("{SESSIONS}7,1,0,3,30,10,40\n");
        let sc = parse_scenario(&s, PRICES, SOLAR, &cfg()).unwrap();
        assert_eq!(sc.sessions.len(), 1);
        assert_eq!(sc.horizon(), 4);
        assert_eq!(sc.sessions[0].id, 7);
        assert_eq!(sc.exogenous[1].pv_gen, 5.0);
        assert_eq!(sc.exogenous[0].kappa_v2v, 0.25);
    }

    #[test]
    fn overlapping_sessions_name_charger_and_lines() {
        let s = format!("{SESSIONS}1,0,0,3,30,10,40\n2,1,0,2,30,10,40\n3,0,2,4,30,10,40\n");
        match parse_scenario(&s, PRICES, SOLAR, &cfg()) {
            Err(ScenarioError::Overlap { charger, first_line, second_line }) => {
                assert_eq!((charger, first_line, second_line), (0, 2, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_inputs_report_lines() {
        let bad_header = "session,charger_id\n";
        assert!(matches!(parse_scenario(bad_header, PRICES, SOLAR, &cfg()), Err(ScenarioError::Header { .. })));
        let neg = "step,buy,sell\n0,-0.4,0.1\n";
        match parse_scenario(SESSIONS, neg, "step,gen_kw\n0,0\n", &cfg()) {
            Err(ScenarioError::Row { file, line, .. }) => assert_eq!((file.as_str(), line), ("prices.csv", 2)),
            other => panic!("unexpected {other:?}"),
        }
        let short = "step,gen_kw\n0,0\n";
        assert!(matches!(parse_scenario(SESSIONS, PRICES, short, &cfg()), Err(ScenarioError::Invalid(_))));
        let late = format!("{SESSIONS}1,0,0,9,30,10,40\n");
        assert!(matches!(parse_scenario(&late, PRICES, SOLAR, &cfg()), Err(ScenarioError::Row { line: 2, .. })));
        let garbage = format!("{SESSIONS}1,0,zero,2,30,10,40\n");
        assert!(parse_scenario(&garbage, PRICES, SOLAR, &cfg()).is_err());
        let gap = "step,buy,sell\n0,0.4,0.1\n2,0.4,0.1\n";
        assert!(parse_scenario(SESSIONS, gap, "step,gen_kw\n0,0\n1,0\n", &cfg()).is_err());
    }

    #[test]
    fn generator_is_deterministic() {
        let p = SyntheticProfile::default();
        assert_eq!(generate_synthetic(3, 2, 11, &p), generate_synthetic(3, 2, 11, &p));
        assert_ne!(generate_synthetic(3, 2, 11, &p), generate_synthetic(3, 2, 12, &p));
    }

    #[test]
    fn generated_scenarios_are_valid() {
        let p = SyntheticProfile::default();
        for seed in 0..20 {
            let sc = generate_synthetic(4, 3, seed, &p);
            sc.validate().unwrap();
            assert_eq!(sc.horizon(), 3 * 96);
            for (t, ex) in sc.exogenous.iter().enumerate() {
                assert!(ex.kappa_sell <= ex.kappa_v2v && ex.kappa_v2v <= ex.kappa_buy);
                let hour = (t % 96) as f64 * 0.25;
                if !(6.0..18.0).contains(&hour) {
                    assert_eq!(ex.pv_gen, 0.0, "step {t}");
                }
            }
        }
    }

    #[test]
    fn truncation_keeps_scenario_valid() {
        let sc = generate_synthetic(3, 2, 5, &SyntheticProfile::default());
        let t = sc.truncated(100);
        assert_eq!(t.horizon(), 100);
        t.validate().unwrap();
    }
}
