//! Value parsers for command-line arguments.

use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Dir(PathBuf),
    /// `synthetic:NxS` is `N` chargers over `S` steps; `synthetic:NxDd` is `D` days.
    Synthetic { chargers: usize, length: Length },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Length {
    Steps(usize),
    Days(usize),
}

pub fn scenario_source(s: &str) -> Result<ScenarioSource, String> {
    let Some(body) = s.strip_prefix("synthetic:") else {
        if s.is_empty() {
            return Err("empty scenario path".into());
        }
        return Ok(ScenarioSource::Dir(PathBuf::from(s)));
    };
    let (n, len) = body
        .split_once('x')
        .ok_or_else(|| format!("expected synthetic:NxS, found `{s}`"))?;
    let chargers: usize = n.parse().map_err(|_| format!("bad charger count `{n}`"))?;
    let length = match len.strip_suffix('d') {
        Some(d) => Length::Days(d.parse().map_err(|_| format!("bad day count `{d}`"))?),
        None => Length::Steps(len.parse().map_err(|_| format!("bad step count `{len}`"))?),
    };
    if chargers == 0 || matches!(length, Length::Steps(0) | Length::Days(0)) {
        return Err(format!("synthetic scenario `{s}` is empty"));
    }
    Ok(ScenarioSource::Synthetic { chargers, length })
}

pub fn unit_interval(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{x} is outside [0, 1]"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultArg {
    pub step: usize,
    pub chargers: Vec<usize>,
}

/// `step=S,chargers=A,B,...`
pub fn fault(s: &str) -> Result<FaultArg, String> {
    let usage = || format!("expected step=S,chargers=LIST, found `{s}`");
    let rest = s.strip_prefix("step=").ok_or_else(usage)?;
    let (step, list) = rest.split_once(",chargers=").ok_or_else(usage)?;
    let step = step.parse().map_err(|_| format!("bad fault step `{step}`"))?;
    let chargers = list
        .split(',')
        .map(|c| c.trim().parse().map_err(|_| format!("bad charger index `{c}`")))
        .collect::<Result<Vec<usize>, _>>()?;
    if chargers.is_empty() {
        return Err(usage());
    }
    Ok(FaultArg { step, chargers })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    Xi(Vec<f64>),
    Size(Vec<usize>),
}

impl SweepGrid {
    pub fn name(&self) -> &'static str {
        match self {
            SweepGrid::Xi(_) => "xi",
            SweepGrid::Size(_) => "size",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepGrid::Xi(v) => v.len(),
            SweepGrid::Size(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `xi=a:b:k` (k evenly spaced points) or `size=N1,N2,...`.
pub fn sweep_grid(s: &str) -> Result<SweepGrid, String> {
    let (name, body) = s
        .split_once('=')
        .ok_or_else(|| format!("expected xi=a:b:k or size=N,..., found `{s}`"))?;
    match name {
        "xi" => {
            let parts: Vec<&str> = body.split(':').collect();
            let [a, b, k] = parts[..] else {
                return Err(format!("malformed range `{body}`, expected a:b:k"));
            };
            let a = unit_interval(a)?;
            let b = unit_interval(b)?;
            let k: usize = k.parse().map_err(|_| format!("bad point count `{k}`"))?;
            if k == 0 {
                return Err("empty grid".into());
            }
            if k == 1 && a != b {
                return Err(format!("one point cannot span {a}..{b}"));
            }
            let pts = (0..k)
                .map(|i| if k == 1 { a } else { a + (b - a) * i as f64 / (k - 1) as f64 })
                .collect();
            Ok(SweepGrid::Xi(pts))
        }
        "size" => {
            let sizes = body
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| match p.trim().parse::<usize>() {
                    Ok(0) | Err(_) => Err(format!("bad station size `{p}`")),
                    Ok(n) => Ok(n),
                })
                .collect::<Result<Vec<_>, _>>()?;
            if sizes.is_empty() {
                return Err("empty grid".into());
            }
            Ok(SweepGrid::Size(sizes))
        }
        other => Err(format!("unknown sweep parameter `{other}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_sources() {
        assert_eq!(
            scenario_source("synthetic:2x96").unwrap(),
            ScenarioSource::Synthetic { chargers: 2, length: Length::Steps(96) }
        );
        assert_eq!(
            scenario_source("synthetic:4x3d").unwrap(),
            ScenarioSource::Synthetic { chargers: 4, length: Length::Days(3) }
        );
        assert_eq!(scenario_source("data/site").unwrap(), ScenarioSource::Dir("data/site".into()));
        for bad in ["synthetic:2", "synthetic:0x96", "synthetic:2x0", "synthetic:ax96", ""] {
            assert!(scenario_source(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn xi_bounds() {
        assert_eq!(unit_interval("0").unwrap(), 0.0);
        assert_eq!(unit_interval("1").unwrap(), 1.0);
        assert!(unit_interval("1.01").is_err());
        assert!(unit_interval("-0.1").is_err());
        assert!(unit_interval("NaN").is_err());
    }

    #[test]
    fn faults() {
        assert_eq!(fault("step=24,chargers=0,2").unwrap(), FaultArg { step: 24, chargers: vec![0, 2] });
        assert!(fault("step=24").is_err());
        assert!(fault("chargers=1,step=2").is_err());
        assert!(fault("step=x,chargers=1").is_err());
        assert!(fault("step=1,chargers=").is_err());
    }

    #[test]
    fn grids() {
        let SweepGrid::Xi(v) = sweep_grid("xi=0.1:0.9:5").unwrap() else { panic!() };
        let want = [0.1, 0.3, 0.5, 0.7, 0.9];
        assert_eq!(v.len(), 5);
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(sweep_grid("size=4,8").unwrap(), SweepGrid::Size(vec![4, 8]));
        assert_eq!(sweep_grid("xi=0.5:0.5:1").unwrap(), SweepGrid::Xi(vec![0.5]));
        for bad in ["xi=0.1:0.9:0", "xi=0.1:0.9", "xi=0.1:2:3", "size=", "size=0", "size=a", "rho=1", "xi"] {
            assert!(sweep_grid(bad).is_err(), "{bad}");
        }
    }
}
