//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stablehk::model::ModelParams;
use stablehk::simulator::{GridSpec, SimConfig};
use stablehk::verifier::{Design, RadialSettings, Suite};
use stablehk::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Mc,
    Pde,
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub alpha: f64,
    pub kappa: f64,
}

fn default_eps() -> f64 {
    1e-4
}
fn default_c_cfl() -> f64 {
    0.2
}
fn default_c_bw() -> f64 {
    0.5
}
fn default_blocks() -> usize {
    10
}

/// Simulation settings. `eps`, `dt` and the grid box refer to t = 1; at other
/// design times they follow the parabolic scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_paths: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub eps_schedule: Vec<f64>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_c_cfl")]
    pub c_cfl: f64,
    #[serde(default = "default_c_bw")]
    pub c_bw: f64,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

fn default_times() -> Vec<f64> {
    vec![0.25, 1.0, 4.0]
}

/// Design overrides; radii are in units of t^{1/α}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default)]
    pub x_radii: Option<Vec<f64>>,
    #[serde(default)]
    pub y_radii: Option<Vec<f64>>,
    #[serde(default)]
    pub diag_offsets: Option<Vec<f64>>,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            times: default_times(),
            x_radii: None,
            y_radii: None,
            diag_offsets: None,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("stablehk-out")
}

fn default_backend() -> BackendChoice {
    BackendChoice::Mc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelSection,
    #[serde(default = "default_backend")]
    pub backend: BackendChoice,
    pub sim: SimSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub radial: Option<RadialSettings>,
    /// Run the 3-d grid cross-checks during `verify`.
    #[serde(default)]
    pub grid_check: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical JSON (defaults filled in); the manifest hashes these bytes.
    pub fn canonical_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        if m.kappa == 0.0 {
            ModelParams::free(m.d, m.alpha, self.sim.eps)
        } else {
            ModelParams::new(m.d, m.alpha, m.kappa, self.sim.eps)
        }
    }

    /// Simulation settings at t = 1.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.sim;
        let mut c = SimConfig::new(self.params()?, 1.0, s.n_paths, self.seed);
        c.dt = s.dt;
        c.eps_schedule = s.eps_schedule.clone();
        c.grid = s.grid;
        c.c_cfl = s.c_cfl;
        c.c_bw = s.c_bw;
        c.blocks = s.blocks;
        Ok(c)
    }

    pub fn design(&self) -> Design {
        let base = Design::default();
        let d = &self.design;
        Design {
            t: 1.0,
            x_radii: d.x_radii.clone().unwrap_or(base.x_radii),
            y_radii: d.y_radii.clone().unwrap_or(base.y_radii),
            diag_offsets: d.diag_offsets.clone().unwrap_or(base.diag_offsets),
        }
    }

    /// Verification suite at t = 1; rescale with [`Suite::rescaled`].
    pub fn suite(&self) -> Result<Suite> {
        let mut s = Suite::new(self.sim_config()?, self.design());
        if let Some(r) = self.radial {
            s.radial = r;
        }
        s.grid_check = self.grid_check;
        Ok(s)
    }

    /// Every precondition the subcommands rely on, checked before any work.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = self.params()?;
        if p.kappa > 0.0 && !(p.eps > 0.0) {
            return Err(Error::Config("sim.eps must be positive when kappa > 0".into()));
        }
        let sim = self.sim_config()?;
        sim.validate()?;
        if sim.n_paths < 10_000 && self.backend == BackendChoice::Mc {
            return Err(Error::Config(format!(
                "kernel estimation needs n_paths >= 10^4, got {}",
                sim.n_paths
            )));
        }
        let d = &self.design;
        if d.times.is_empty() || d.times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("design.times must be a nonempty list of positive times".into()));
        }
        let mut sorted = d.times.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() != d.times.len() {
            return Err(Error::Config("design.times has duplicates".into()));
        }
        let design = self.design();
        let bad = |v: &[f64]| v.iter().any(|r| !(*r >= 0.0 && r.is_finite()));
        if bad(&design.x_radii) || bad(&design.y_radii) || bad(&design.diag_offsets) {
            return Err(Error::Config("design radii must be finite and nonnegative".into()));
        }
        if design.x_radii.is_empty() || design.y_radii.is_empty() {
            return Err(Error::Config("design needs at least one x and one y radius".into()));
        }
        if matches!(self.backend, BackendChoice::Pde | BackendChoice::Radial) && p.d != 3 {
            return Err(Error::Config("grid and radial backends are three-dimensional".into()));
        }
        if self.backend == BackendChoice::Radial && design.x_radii.iter().any(|r| *r != 0.0) {
            return Err(Error::Config("the radial backend only starts at the origin".into()));
        }
        if let Some(r) = &self.radial {
            if !r.points.is_power_of_two() || r.points < 128 || !(r.step > 0.0 && r.half_width > 0.0) {
                return Err(Error::Config("radial settings need points a power of two >= 128 and positive sizes".into()));
            }
            if !(r.eps > 0.0 && r.sigma0 > 0.0) {
                return Err(Error::Config("radial eps and sigma0 must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{"schema_version": 1, "model": {"d": 3, "alpha": 1.5, "kappa": 5.0},
            "sim": {"n_paths": 20000}, "seed": 3}"#
    }

    #[test]
    fn defaults_fill_in() {
        let c: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.design.times, vec![0.25, 1.0, 4.0]);
        assert_eq!(c.backend, BackendChoice::Mc);
        assert_eq!(c.sim.grid.points, 64);
    }

    #[test]
    fn schema_and_unknown_fields_rejected() {
        let bad = sample().replace("\"schema_version\": 1", "\"schema_version\": 2");
        let c: ExperimentConfig = serde_json::from_str(&bad).unwrap();
        assert!(c.validate().is_err());
        let typo = sample().replace("\"seed\"", "\"sed\": 1, \"seed\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&typo).is_err());
    }

    #[test]
    fn too_few_paths_rejected() {
        let c = sample().replace("20000", "500");
        let c: ExperimentConfig = serde_json::from_str(&c).unwrap();
        assert!(c.validate().is_err());
    }
}
