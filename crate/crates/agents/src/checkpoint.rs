//! Policy checkpoints: a `policy.txt` of `key = value` metadata plus one
//! network file per agent.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use voltmesh_core::{KvConfig, StationConfig, OBS_DIM};
use voltmesh_nn::{load_checkpoint, save_checkpoint, Network};

use crate::features::Featurizer;
use crate::maddpg::MaddpgPolicy;
use crate::madqn::MadqnPolicy;
use crate::AgentError;

pub const META_FILE: &str = "policy.txt";

#[derive(Debug, Clone, PartialEq)]
pub enum SavedPolicy {
    Maddpg(MaddpgPolicy),
    Madqn(MadqnPolicy),
}

impl SavedPolicy {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedPolicy::Maddpg(_) => "maddpg",
            SavedPolicy::Madqn(_) => "madqn",
        }
    }

    pub fn n_agents(&self) -> usize {
        self.networks().len()
    }

    pub fn station(&self) -> &StationConfig {
        match self {
            SavedPolicy::Maddpg(p) => &p.station,
            SavedPolicy::Madqn(p) => &p.station,
        }
    }

    fn networks(&self) -> &[Network] {
        match self {
            SavedPolicy::Maddpg(p) => &p.actors,
            SavedPolicy::Madqn(p) => &p.q,
        }
    }

    fn featurizer(&self) -> &Featurizer {
        match self {
            SavedPolicy::Maddpg(p) => &p.featurizer,
            SavedPolicy::Madqn(p) => &p.featurizer,
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split(key: &str, s: &str) -> Result<Vec<f64>, AgentError> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| AgentError::Checkpoint(format!("bad number `{x}` in `{key}`")))
        })
        .collect()
}

fn network_file(j: usize) -> String {
    format!("agent_{j}.nn")
}

pub fn save_policy(policy: &SavedPolicy, dir: &Path) -> Result<(), AgentError> {
    fs::create_dir_all(dir)?;
    let s = policy.station();
    let mut meta = String::new();
    let _ = writeln!(meta, "kind = {}", policy.kind());
    let _ = writeln!(meta, "agents = {}", policy.n_agents());
    let _ = writeln!(meta, "n_chargers = {}", s.n_chargers);
    let _ = writeln!(meta, "delta_t = {}", s.delta_t);
    let _ = writeln!(meta, "p_ch_max = {}", s.p_ch_max);
    let _ = writeln!(meta, "p_disch_max = {}", s.p_disch_max);
    let _ = writeln!(meta, "g_max = {}", s.g_max);
    let _ = writeln!(meta, "pv_capacity = {}", s.pv_capacity);
    let _ = writeln!(meta, "feature_scale = {}", join(&policy.featurizer().scale));
    if let SavedPolicy::Madqn(p) = policy {
        let _ = writeln!(meta, "power_levels = {}", join(&p.power_levels));
        let _ = writeln!(meta, "request_levels = {}", join(&p.request_levels));
    }
    fs::write(dir.join(META_FILE), meta)?;
    for (j, net) in policy.networks().iter().enumerate() {
        fs::write(dir.join(network_file(j)), save_checkpoint(net))?;
    }
    Ok(())
}

pub fn load_policy(dir: &Path) -> Result<SavedPolicy, AgentError> {
    let mut kv = KvConfig::load(&dir.join(META_FILE)).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    let ck = |e: voltmesh_core::ConfigError| AgentError::Checkpoint(e.to_string());
    let req = |kv: &mut KvConfig, key: &str| -> Result<String, AgentError> {
        kv.take::<String>(key)
            .map_err(ck)?
            .ok_or_else(|| AgentError::Checkpoint(format!("missing `{key}`")))
    };
    let num = |key: &str, v: String| -> Result<f64, AgentError> {
        v.parse().map_err(|_| AgentError::Checkpoint(format!("bad value `{v}` for `{key}`")))
    };
    let kind = req(&mut kv, "kind")?;
    let agents: usize = req(&mut kv, "agents")?
        .parse()
        .map_err(|_| AgentError::Checkpoint("bad agent count".into()))?;
    let n_chargers: usize = req(&mut kv, "n_chargers")?
        .parse()
        .map_err(|_| AgentError::Checkpoint("bad charger count".into()))?;
    let mut field = |key: &str| -> Result<f64, AgentError> { num(key, req(&mut kv, key)?) };
    let station = StationConfig {
        n_chargers,
        delta_t: field("delta_t")?,
        p_ch_max: field("p_ch_max")?,
        p_disch_max: field("p_disch_max")?,
        g_max: field("g_max")?,
        pv_capacity: field("pv_capacity")?,
    };
    let scale = split("feature_scale", &req(&mut kv, "feature_scale")?)?;
    let scale: [f64; OBS_DIM] = scale
        .try_into()
        .map_err(|_| AgentError::Checkpoint(format!("feature_scale needs {OBS_DIM} values")))?;
    let featurizer = Featurizer { scale };
    if agents != n_chargers {
        return Err(AgentError::Checkpoint(format!(
            "{agents} agents for {n_chargers} chargers"
        )));
    }
    let mut nets = Vec::with_capacity(agents);
    for j in 0..agents {
        let text = fs::read_to_string(dir.join(network_file(j)))?;
        nets.push(load_checkpoint(&text)?);
    }
    let policy = match kind.as_str() {
        "maddpg" => SavedPolicy::Maddpg(MaddpgPolicy {
            actors: nets,
            featurizer,
            station,
        }),
        "madqn" => {
            let power_levels = split("power_levels", &req(&mut kv, "power_levels")?)?;
            let request_levels = split("request_levels", &req(&mut kv, "request_levels")?)?;
            SavedPolicy::Madqn(MadqnPolicy {
                q: nets,
                power_levels,
                request_levels,
                featurizer,
                station,
            })
        }
        other => return Err(AgentError::Checkpoint(format!("unknown policy kind `{other}`"))),
    };
    kv.finish().map_err(ck)?;
    let width = match &policy {
        SavedPolicy::Maddpg(_) => OBS_DIM,
        SavedPolicy::Madqn(_) => agents * OBS_DIM,
    };
    if let Some(j) = policy.networks().iter().position(|n| n.input_dim() != width) {
        return Err(AgentError::Checkpoint(format!("agent {j} network does not take {width} inputs")));
    }
    Ok(policy)
}
