//! Flat `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Each consumer takes the keys it
//! understands; [`KvConfig::finish`] then rejects anything left over, so typos
//! do not pass silently.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::dispatch::{AllocationOrder, ShareBasis};
use crate::episode::{EngineOptions, FairnessMode};
use crate::metrics::FapMode;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config line {line}: bad value `{value}` for `{key}`: {message}")]
    Value {
        line: usize,
        key: String,
        value: String,
        message: String,
    },
    #[error("unknown config keys: {0}")]
    Unknown(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Station, battery and reward keys with their defaults.
pub const CORE_KEYS: &[(&str, &str)] = &[
    ("n_chargers", "2"),
    ("delta_t", "0.25"),
    ("p_ch_max", "16"),
    ("p_disch_max", "16"),
    ("g_max", "100"),
    ("pv_capacity", "30"),
    ("e_cap", "40"),
    ("e_min_frac", "0"),
    ("e_max_frac", "1"),
    ("eta_ch", "0.95"),
    ("eta_disch", "0.95"),
    ("l_cyc", "3000"),
    ("kappa_batt", "6000"),
    ("xi", "0.5"),
    ("rho", "1"),
    ("grid_penalty", "1"),
    ("fairness", "minus"),
    ("fap_mode", "floored"),
    ("allocation_order", "pv_first"),
    ("share_basis", "requested_power"),
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("expected key=value, found `{body}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line, message: "empty key".into() });
            }
            if entries.insert(k.to_string(), (line, v.to_string())).is_some() {
                return Err(ConfigError::Syntax { line, message: format!("duplicate key `{k}`") });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes `key` and parses its value.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, value)) = self.entries.remove(key) else {
            return Ok(None);
        };
        value.parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
            line,
            key: key.into(),
            value: value.clone(),
            message: e.to_string(),
        })
    }

    fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn take_choice<T: Copy>(&mut self, key: &str, slot: &mut T, choices: &[(&str, T)]) -> Result<(), ConfigError> {
        let Some((line, value)) = self.entries.remove(key) else {
            return Ok(());
        };
        match choices.iter().find(|(name, _)| *name == value) {
            Some((_, v)) => {
                *slot = *v;
                Ok(())
            }
            None => Err(ConfigError::Value {
                line,
                key: key.into(),
                value,
                message: format!(
                    "expected one of {}",
                    choices.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
                ),
            }),
        }
    }

    pub fn apply_scenario(&mut self, cfg: &mut ScenarioConfig) -> Result<(), ConfigError> {
        let s = &mut cfg.station;
        self.take_into("n_chargers", &mut s.n_chargers)?;
        self.take_into("delta_t", &mut s.delta_t)?;
        self.take_into("p_ch_max", &mut s.p_ch_max)?;
        self.take_into("p_disch_max", &mut s.p_disch_max)?;
        self.take_into("g_max", &mut s.g_max)?;
        self.take_into("pv_capacity", &mut s.pv_capacity)?;
        let b = &mut cfg.battery;
        self.take_into("e_cap", &mut b.e_cap)?;
        self.take_into("e_min_frac", &mut b.e_min_frac)?;
        self.take_into("e_max_frac", &mut b.e_max_frac)?;
        self.take_into("eta_ch", &mut b.eta_ch)?;
        self.take_into("eta_disch", &mut b.eta_disch)?;
        self.take_into("l_cyc", &mut b.l_cyc)?;
        self.take_into("kappa_batt", &mut b.kappa_batt)?;
        Ok(())
    }

    pub fn apply_engine(&mut self, opts: &mut EngineOptions) -> Result<(), ConfigError> {
        let r = &mut opts.reward;
        self.take_into("xi", &mut r.xi)?;
        self.take_into("rho", &mut r.rho)?;
        self.take_into("grid_penalty", &mut r.grid_penalty_coeff)?;
        self.take_choice(
            "fairness",
            &mut r.fairness,
            &[("minus", FairnessMode::Minus), ("plus", FairnessMode::Plus), ("off", FairnessMode::Off)],
        )?;
        self.take_choice("fap_mode", &mut r.fap_mode, &[("floored", FapMode::Floored), ("literal", FapMode::Literal)])?;
        let a = &mut opts.allocation;
        self.take_choice(
            "allocation_order",
            &mut a.order,
            &[("pv_first", AllocationOrder::PvFirst), ("v2v_first", AllocationOrder::V2vFirst)],
        )?;
        self.take_choice(
            "share_basis",
            &mut a.basis,
            &[("requested_power", ShareBasis::RequestedPower), ("energy_headroom", ShareBasis::EnergyHeadroom)],
        )?;
        Ok(())
    }

    /// Fails if any key was never taken.
    pub fn finish(self) -> Result<(), ConfigError> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<String> = self
            .entries
            .iter()
            .map(|(k, (line, _))| format!("{k} (line {line})"))
            .collect();
        Err(ConfigError::Unknown(keys.join(", ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_applies_keys() {
        let mut kv = KvConfig::parse("# station\ng_max = 80\nxi=0.7 # weight\n\nfairness = off\nshare_basis=energy_headroom\n").unwrap();
        let mut sc = ScenarioConfig::default();
        let mut eo = EngineOptions::default();
        kv.apply_scenario(&mut sc).unwrap();
        kv.apply_engine(&mut eo).unwrap();
        kv.finish().unwrap();
        assert_eq!(sc.station.g_max, 80.0);
        assert_eq!(eo.reward.xi, 0.7);
        assert_eq!(eo.reward.fairness, FairnessMode::Off);
        assert_eq!(eo.allocation.basis, ShareBasis::EnergyHeadroom);
    }

    #[test]
    fn rejects_bad_lines_values_and_unknown_keys() {
        assert!(matches!(KvConfig::parse("a=1\nnonsense\n"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(KvConfig::parse("a=1\na=2\n"), Err(ConfigError::Syntax { line: 2, .. })));
        let mut kv = KvConfig::parse("xi=lots").unwrap();
        assert!(matches!(kv.apply_engine(&mut EngineOptions::default()), Err(ConfigError::Value { line: 1, .. })));
        let mut kv = KvConfig::parse("fairness=sometimes").unwrap();
        assert!(kv.apply_engine(&mut EngineOptions::default()).is_err());
        let kv = KvConfig::parse("mystery=1").unwrap();
        assert!(matches!(kv.finish(), Err(ConfigError::Unknown(_))));
    }

    #[test]
    fn documented_defaults_match_code() {
        let text: String = CORE_KEYS.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let mut kv = KvConfig::parse(&text).unwrap();
        let mut sc = ScenarioConfig::default();
        let mut eo = EngineOptions::default();
        kv.apply_scenario(&mut sc).unwrap();
        kv.apply_engine(&mut eo).unwrap();
        kv.finish().unwrap();
        assert_eq!(sc, ScenarioConfig::default());
        assert_eq!(eo, EngineOptions::default());
    }
}
