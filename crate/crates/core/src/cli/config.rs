use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::conformal1d::CircleMap;
use crate::error::{Error, Result};
use crate::map_models::{PotentialSpec, SkewMap, TorusPoint};
use crate::markov_partition::DEFAULT_ANCHOR;
use crate::sampling_stats::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Thermo,
    Clt,
    Median,
    Arcsine,
    Maximum,
    Conformal1d,
    Diagnostics,
    All,
}

impl Mode {
    pub fn samples(self) -> bool {
        !matches!(self, Mode::Thermo)
    }
}

/// One flat JSON document describing a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub mode: Mode,
    pub k: u32,
    #[serde(default)]
    pub a: f64,
    /// Fiber degree; absent for `conformal1d`.
    #[serde(default)]
    pub l: Option<u32>,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub anchor: Option<TorusPoint>,
    pub potential: PotentialSpec,
    pub depth: usize,
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    #[serde(default = "default_b_grid")]
    pub b_grid: Vec<f64>,
    /// Points used for the direct ball measures in diagnostics.
    #[serde(default = "default_direct_points")]
    pub direct_points: usize,
    #[serde(default = "default_cov_orbits")]
    pub cov_orbits: usize,
    #[serde(default = "default_cov_len")]
    pub cov_len: usize,
    #[serde(default = "default_cov_batch")]
    pub cov_batch: usize,
    #[serde(default)]
    pub write_paths: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_b_grid() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0]
}

fn default_direct_points() -> usize {
    20
}

fn default_cov_orbits() -> usize {
    1000
}

fn default_cov_len() -> usize {
    10_000
}

fn default_cov_batch() -> usize {
    500
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.mode.samples() {
            self.experiment.validate()?;
        }
        if self.b_grid.is_empty() || self.b_grid.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return bad("b_grid must be non-empty with positive entries".into());
        }
        if self.cov_batch == 0 || self.cov_len < self.cov_batch || self.cov_orbits == 0 {
            return bad("covariance run needs cov_orbits > 0 and cov_len >= cov_batch > 0".into());
        }
        if self.mode == Mode::Conformal1d {
            self.circle_map()?;
        } else {
            self.skew_map()?;
        }
        Ok(())
    }

    pub fn skew_map(&self) -> Result<SkewMap> {
        let l = self.l.ok_or_else(|| Error::Config("fiber degree l is required for two-dimensional modes".into()))?;
        SkewMap::new(self.k, self.a, l, self.b, self.c)
    }

    pub fn circle_map(&self) -> Result<CircleMap> {
        CircleMap::new(self.k, self.a)
    }

    pub fn anchor(&self) -> TorusPoint {
        self.anchor.unwrap_or(DEFAULT_ANCHOR)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BERNOULLI: &str = r#"{
        "schema_version": 1, "mode": "clt", "k": 2, "l": 3, "b": 1.5, "c": 0.3,
        "potential": {"kind": "cylinder_piecewise_constant", "depth": 1,
                      "values": [-2.4849066497880004, -2.4849066497880004, -2.4849066497880004,
                                 -1.3862943611198906, -1.3862943611198906, -1.3862943611198906]},
        "depth": 4, "eps_list": [1e-3, 1e-6], "n_samples": 100, "seed": 1
    }"#;

    #[test]
    fn parses_with_defaults_and_round_trips() {
        let cfg = RunConfig::from_json(BERNOULLI).unwrap();
        assert_eq!(cfg.experiment.t_grid.len(), 101);
        assert_eq!(cfg.b_grid, vec![0.5, 1.0, 1.5, 2.0]);
        let echo = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&echo).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let non_expanding = BERNOULLI.replace("\"b\": 1.5", "\"b\": 2.5");
        assert!(RunConfig::from_json(&non_expanding).unwrap_err().to_string().contains("expansion violated"));
        let version = BERNOULLI.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(RunConfig::from_json(&version).unwrap_err().is_validation());
        let order = BERNOULLI.replace("[1e-3, 1e-6]", "[1e-6, 1e-3]");
        assert!(RunConfig::from_json(&order).unwrap_err().is_validation());
        let missing_l = BERNOULLI.replace("\"l\": 3,", "");
        assert!(RunConfig::from_json(&missing_l).unwrap_err().is_validation());
    }
}
