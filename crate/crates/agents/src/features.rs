//! Conversions between environment values and network inputs/outputs.

use serde::{Deserialize, Serialize};
use voltmesh_core::{AgentAction, AgentObservation, StationConfig, OBS_DIM};

/// Number of action components per agent.
pub const ACT_DIM: usize = 3;

/// Per-field scaling of observations into roughly unit range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub scale: [f64; OBS_DIM],
}

impl Featurizer {
    /// `e_ref` is a typical battery capacity in kWh.
    pub fn for_station(cfg: &StationConfig, e_ref: f64) -> Self {
        Self {
            scale: [1.0 / e_ref, 1.0 / 12.0, 1.0 / e_ref, 2.0, 2.0, 1.0 / cfg.pv_capacity],
        }
    }

    pub fn features(&self, o: &AgentObservation) -> [f64; OBS_DIM] {
        let mut x = o.to_array();
        for (v, s) in x.iter_mut().zip(&self.scale) {
            *v *= s;
        }
        x
    }
}

/// Maps a point of `[-1, 1]^3` to an action: the first component scales the
/// charge or discharge limit, the other two become request fractions.
pub fn action_from_unit(u: &[f64], cfg: &StationConfig) -> AgentAction {
    let p = u[0].clamp(-1.0, 1.0);
    AgentAction {
        p_signed: if p >= 0.0 { p * cfg.p_ch_max } else { p * cfg.p_disch_max },
        v2v_request: 0.5 * (u[1].clamp(-1.0, 1.0) + 1.0),
        pv_request: 0.5 * (u[2].clamp(-1.0, 1.0) + 1.0),
    }
}

pub fn unit_from_action(a: &AgentAction, cfg: &StationConfig) -> [f64; ACT_DIM] {
    let p = if a.p_signed >= 0.0 {
        a.p_signed / cfg.p_ch_max
    } else {
        a.p_signed / cfg.p_disch_max
    };
    [p, 2.0 * a.v2v_request - 1.0, 2.0 * a.pv_request - 1.0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_mapping_round_trips() {
        let cfg = StationConfig { p_disch_max: 8.0, ..Default::default() };
        for u in [[1.0, -1.0, 0.0], [-0.5, 0.2, 1.0], [0.0, 0.0, -1.0]] {
            let a = action_from_unit(&u, &cfg);
            let back = unit_from_action(&a, &cfg);
            for k in 0..3 {
                assert!((back[k] - u[k]).abs() < 1e-12);
            }
        }
        let a = action_from_unit(&[-1.0, 1.0, -1.0], &cfg);
        assert_eq!((a.p_signed, a.v2v_request, a.pv_request), (-8.0, 1.0, 0.0));
    }

    #[test]
    fn empty_observation_has_zero_features() {
        let f = Featurizer::for_station(&StationConfig::default(), 40.0);
        assert_eq!(f.features(&AgentObservation::default()), [0.0; OBS_DIM]);
    }
}
