//! Kernel estimation backends: Monte Carlo over the mollified SDE, a periodic
//! pseudospectral solver on a 3-d box, and a radial solver for radial data.

pub mod mc;
pub mod pde;
pub mod radial;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::ModelParams;

pub use mc::{estimate_kernel, euler_paths, Endpoints};
pub use pde::{propagate, Direction, Field3, Propagation};
pub use radial::RadialSolver;

/// Periodic box [−L/2, L/2)³ with N points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub box_size: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            box_size: 16.0,
            points: 64,
        }
    }
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

/// Configuration shared by both backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub t_final: f64,
    /// Base time step; `None` selects min(0.01, t_final/100).
    #[serde(default)]
    pub dt: Option<f64>,
    pub n_paths: usize,
    #[serde(default)]
    pub eps_schedule: Vec<f64>,
    #[serde(default)]
    pub grid: GridSpec,
    pub seed: u64,
    /// Largest drift displacement per substep as a fraction of |X|_ε.
    #[serde(default = "default_c_cfl")]
    pub c_cfl: f64,
    /// Bandwidth prefactor of the kernel density estimate.
    #[serde(default = "default_c_bw")]
    pub c_bw: f64,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

impl SimConfig {
    pub fn new(params: ModelParams, t_final: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            params,
            t_final,
            dt: None,
            n_paths,
            eps_schedule: Vec::new(),
            grid: GridSpec::default(),
            seed,
            c_cfl: default_c_cfl(),
            c_bw: default_c_bw(),
            blocks: default_blocks(),
        }
    }

    pub fn base_dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| (self.t_final / 100.0).min(0.01))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        let dt = self.base_dt();
        if !(dt > 0.0) || self.t_final < dt {
            return Err(Error::Config(format!("need 0 < dt <= t_final, got dt = {dt}")));
        }
        if !(self.params.eps > 0.0) && self.params.kappa > 0.0 {
            return Err(Error::Config("simulation needs eps > 0".into()));
        }
        if let Some(e) = self.eps_schedule.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::Config(format!("eps_schedule entries must be positive, got {e}")));
        }
        if !(self.c_cfl > 0.0 && self.c_cfl <= 1.0) {
            return Err(Error::Config("c_cfl must lie in (0, 1]".into()));
        }
        if !(self.c_bw > 0.0) || self.blocks < 2 {
            return Err(Error::Config("need c_bw > 0 and at least two blocks".into()));
        }
        if !self.grid.points.is_power_of_two() || self.grid.points < 8 || !(self.grid.box_size > 0.0) {
            return Err(Error::Config("grid points must be a power of two >= 8".into()));
        }
        Ok(())
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        let mut c = self.clone();
        c.params = c.params.with_eps(eps);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    #[serde(rename = "MC")]
    MonteCarlo,
    #[serde(rename = "PDE")]
    Pde,
    #[serde(rename = "RADIAL")]
    Radial,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::MonteCarlo => "MC",
            Backend::Pde => "PDE",
            Backend::Radial => "RADIAL",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "MC" => Ok(Backend::MonteCarlo),
            "PDE" => Ok(Backend::Pde),
            "RADIAL" => Ok(Backend::Radial),
            other => Err(Error::Io(format!("unknown backend {other}"))),
        }
    }
}

/// One estimate of e^{−tΛ}(x, y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub backend: Backend,
    /// KDE bandwidth, or grid spacing for the grid backends.
    pub resolution: f64,
    pub inconclusive: bool,
}

impl KernelPoint {
    pub fn rel_stderr(&self) -> f64 {
        if self.estimate > 0.0 {
            self.stderr / self.estimate
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelField {
    pub points: Vec<KernelPoint>,
}

impl KernelField {
    pub fn dim(&self) -> usize {
        self.points.first().map(|p| p.x.len()).unwrap_or(3)
    }

    pub fn extend(&mut self, other: KernelField) {
        self.points.extend(other.points);
    }

    /// CSV with columns t, x1..xd, y1..yd, estimate, stderr, backend,
    /// resolution, inconclusive.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.dim();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.extend((1..=d).map(|i| format!("y{i}")));
        header.extend(["estimate", "stderr", "backend", "resolution", "inconclusive"].map(String::from));
        wr.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for p in &self.points {
            if p.x.len() != d || p.y.len() != d {
                return Err(domain("KernelField::write_csv", "mixed dimensions"));
            }
            let mut rec = vec![p.t.to_string()];
            rec.extend(p.x.iter().map(|v| v.to_string()));
            rec.extend(p.y.iter().map(|v| v.to_string()));
            rec.push(p.estimate.to_string());
            rec.push(p.stderr.to_string());
            rec.push(p.backend.as_str().to_string());
            rec.push(p.resolution.to_string());
            rec.push(p.inconclusive.to_string());
            wr.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
        let d = headers.iter().filter(|h| h.starts_with('x')).count();
        if headers.len() != 2 * d + 6 {
            return Err(Error::Io("unexpected KernelField header".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Io(format!("bad number {s}: {e}")));
        let mut points = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            let x = (1..=d).map(|i| num(&rec[i])).collect::<Result<Vec<_>>>()?;
            let y = (d + 1..=2 * d).map(|i| num(&rec[i])).collect::<Result<Vec<_>>>()?;
            let k = 2 * d + 1;
            points.push(KernelPoint {
                t: num(&rec[0])?,
                x,
                y,
                estimate: num(&rec[k])?,
                stderr: num(&rec[k + 1])?,
                backend: Backend::parse(&rec[k + 2])?,
                resolution: num(&rec[k + 3])?,
                inconclusive: rec[k + 4].parse::<bool>().map_err(|e| Error::Io(e.to_string()))?,
            });
        }
        Ok(Self { points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let p = ModelParams::new(3, 1.5, 5.0, 1e-3).unwrap();
        let mut c = SimConfig::new(p, 1.0, 1000, 1);
        assert!(c.validate().is_ok());
        assert_eq!(c.base_dt(), 0.01);
        c.dt = Some(2.0);
        assert!(c.validate().is_err());
        c.dt = None;
        c.eps_schedule = vec![1e-2, 0.0];
        assert!(c.validate().is_err());
        let c = SimConfig::new(p.with_eps(0.0), 1.0, 1000, 1);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn field_csv_round_trip() {
        let f = KernelField {
            points: vec![KernelPoint {
                t: 0.25,
                x: vec![0.0, 0.1, -0.3],
                y: vec![1.0 / 3.0, 2.0, 1e-9],
                estimate: 0.123_456_789_012_345_6,
                stderr: 1e-4,
                backend: Backend::MonteCarlo,
                resolution: 0.05,
                inconclusive: false,
            }],
        };
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = KernelField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(f, g);
    }
}
