//! Euler scheme for dX = b_ε(X)dt + dL_t with isotropic α-stable noise, and a
//! kernel density estimate of the endpoint law.

use rayon::prelude::*;

use super::{Backend, KernelField, KernelPoint, SimConfig};
use crate::error::{Error, Result};
use crate::sampler::{stable_increment_into, RngStream};
use crate::stable_kernel::envelope;
use crate::stats::{mean_stderr, wasserstein1};

/// Largest number of substeps a single path may take before it is flagged.
const MAX_SUBSTEPS: u64 = 50_000_000;

/// Endpoint sample X_T of an ensemble started at `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoints {
    pub d: usize,
    pub t: f64,
    pub x0: Vec<f64>,
    /// Row-major, `n × d`; flagged paths are removed.
    pub data: Vec<f64>,
    pub flagged: usize,
    pub substeps: u64,
}

impl Endpoints {
    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn radii(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.d)
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// |X_T − x0| for each path.
    pub fn displacements(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.d)
            .map(|p| {
                p.iter()
                    .zip(&self.x0)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Fraction of endpoints inside B(0, radius).
    pub fn mass_in_ball(&self, radius: f64) -> f64 {
        let r2 = radius * radius;
        let inside = self
            .data
            .chunks_exact(self.d)
            .filter(|p| p.iter().map(|v| v * v).sum::<f64>() <= r2)
            .count();
        inside as f64 / self.len().max(1) as f64
    }

    /// The first `n` endpoints.
    pub fn truncated(&self, n: usize) -> Endpoints {
        let n = n.min(self.len());
        Endpoints {
            data: self.data[..n * self.d].to_vec(),
            ..self.clone()
        }
    }
}

/// Simulates one path; returns None when the state leaves the finite floats
/// or the substep budget is exhausted.
#[allow(clippy::too_many_arguments)]
fn run_path(
    x0: &[f64],
    kappa: f64,
    alpha: f64,
    eps: f64,
    t_final: f64,
    dt: f64,
    c_cfl: f64,
    stream: RngStream,
    out: &mut [f64],
) -> Option<u64> {
    let d = x0.len();
    let mut rng = stream.rng();
    out.copy_from_slice(x0);
    let mut z = vec![0.0; d];
    let mut t = 0.0;
    let mut steps = 0u64;
    while t < t_final {
        let r2: f64 = out.iter().map(|v| v * v).sum();
        let re2 = r2 + eps;
        let c = kappa * re2.powf(-0.5 * alpha);
        let mut h = dt.min(t_final - t);
        let speed = c * r2.sqrt();
        if speed > 0.0 {
            h = h.min(c_cfl * re2.sqrt() / speed);
        }
        if t_final - t - h <= 1e-12 * t_final {
            h = t_final - t;
        }
        stable_increment_into(alpha, h, &mut rng, &mut z);
        for (xi, zi) in out.iter_mut().zip(&z) {
            *xi += c * *xi * h + zi;
        }
        t += h;
        steps += 1;
        if steps > MAX_SUBSTEPS || !out.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    Some(steps)
}

/// Endpoints of `config.n_paths` Euler paths from `x0`. Path i draws from the
/// stream (seed, i), so results do not depend on the thread count.
pub fn euler_paths(x0: &[f64], config: &SimConfig) -> Result<Endpoints> {
    config.validate()?;
    let p = &config.params;
    if x0.len() != p.d {
        return Err(Error::Config(format!("x0 has dimension {}, model has {}", x0.len(), p.d)));
    }
    let dt = config.base_dt();
    let d = p.d;
    let results: Vec<(Vec<f64>, Option<u64>)> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; d];
            let s = run_path(
                x0,
                p.kappa,
                p.alpha,
                p.eps,
                config.t_final,
                dt,
                config.c_cfl,
                RngStream::new(config.seed, i as u64),
                &mut out,
            );
            (out, s)
        })
        .collect();
    let mut data = Vec::with_capacity(config.n_paths * d);
    let mut flagged = 0usize;
    let mut substeps = 0u64;
    for (pt, s) in results {
        match s {
            Some(k) => {
                data.extend_from_slice(&pt);
                substeps += k;
            }
            None => flagged += 1,
        }
    }
    if flagged as f64 > 1e-4 * config.n_paths as f64 {
        return Err(Error::Simulation(format!(
            "{flagged} of {} paths left the finite range",
            config.n_paths
        )));
    }
    Ok(Endpoints {
        d,
        t: config.t_final,
        x0: x0.to_vec(),
        data,
        flagged,
        substeps,
    })
}

/// Restarts every endpoint for a further `config.t_final`, drawing path i from
/// the stream (config.seed, i). Used for the Markov-restart check.
pub fn continue_paths(start: &Endpoints, config: &SimConfig) -> Result<Endpoints> {
    config.validate()?;
    let p = &config.params;
    let d = start.d;
    let dt = config.base_dt();
    let results: Vec<(Vec<f64>, Option<u64>)> = (0..start.len())
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; d];
            let s = run_path(
                start.point(i),
                p.kappa,
                p.alpha,
                p.eps,
                config.t_final,
                dt,
                config.c_cfl,
                RngStream::new(config.seed, i as u64),
                &mut out,
            );
            (out, s)
        })
        .collect();
    let mut data = Vec::with_capacity(start.data.len());
    let mut flagged = start.flagged;
    let mut substeps = start.substeps;
    for (pt, s) in results {
        match s {
            Some(k) => {
                data.extend_from_slice(&pt);
                substeps += k;
            }
            None => flagged += 1,
        }
    }
    Ok(Endpoints {
        d,
        t: start.t + config.t_final,
        x0: start.x0.clone(),
        data,
        flagged,
        substeps,
    })
}

/// Pilot-envelope bandwidth h(y) = c_bw (envelope(t, |y − x0|) n)^{−1/(d+4)},
/// capped at |y|/2 so the window never reaches the origin.
pub fn bandwidth(config: &SimConfig, x0: &[f64], y: &[f64], n: usize) -> f64 {
    let p = &config.params;
    let r = x0.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let env = envelope(p.d, p.alpha, config.t_final, r);
    let h = config.c_bw * (env * n as f64).powf(-1.0 / (p.d as f64 + 4.0));
    let ry = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ry > 0.0 && p.kappa > 0.0 {
        h.min(0.5 * ry)
    } else {
        h
    }
}

/// Gaussian kernel density estimate at each y; the standard error comes from
/// splitting the ensemble into `config.blocks` contiguous blocks.
pub fn kde_field(endpoints: &Endpoints, ys: &[Vec<f64>], config: &SimConfig) -> Result<KernelField> {
    let d = endpoints.d;
    let n = endpoints.len();
    let blocks = config.blocks;
    if n < blocks * 10 {
        return Err(Error::Config(format!("need at least {} endpoints, got {n}", blocks * 10)));
    }
    if ys.iter().any(|y| y.len() != d) {
        return Err(Error::Config("design point dimension mismatch".into()));
    }
    let per = n / blocks;
    let points = ys
        .par_iter()
        .map(|y| {
            let h = bandwidth(config, &endpoints.x0, y, n);
            let cut2 = 36.0 * h * h;
            let inv = 1.0 / (2.0 * h * h);
            let norm = (2.0 * std::f64::consts::PI * h * h).powf(-0.5 * d as f64);
            let block_vals: Vec<f64> = (0..blocks)
                .map(|b| {
                    let mut acc = 0.0;
                    for i in b * per..(b + 1) * per {
                        let p = endpoints.point(i);
                        let mut r2 = 0.0;
                        for k in 0..d {
                            r2 += (p[k] - y[k]).powi(2);
                        }
                        if r2 < cut2 {
                            acc += (-r2 * inv).exp();
                        }
                    }
                    acc * norm / per as f64
                })
                .collect();
            let (estimate, stderr) = mean_stderr(&block_vals);
            KernelPoint {
                t: endpoints.t,
                x: endpoints.x0.clone(),
                y: y.clone(),
                estimate,
                stderr,
                backend: Backend::MonteCarlo,
                resolution: h,
                inconclusive: !(estimate > 0.0) || stderr > 0.25 * estimate,
            }
        })
        .collect();
    Ok(KernelField { points })
}

/// Simulates from `x0` and estimates the kernel at the design points.
pub fn estimate_kernel(x0: &[f64], ys: &[Vec<f64>], config: &SimConfig) -> Result<KernelField> {
    if config.n_paths < 10_000 {
        return Err(Error::Config(format!(
            "kernel estimation needs n_paths >= 10^4, got {}",
            config.n_paths
        )));
    }
    let endpoints = euler_paths(x0, config)?;
    kde_field(&endpoints, ys, config)
}

/// Wasserstein-1 distances between |X_T| samples for consecutive entries of
/// the ε schedule (same seed, so the noise is shared).
pub fn eps_refinement_study(x0: &[f64], config: &SimConfig) -> Result<Vec<(f64, f64, f64)>> {
    let mut radii = Vec::new();
    for &eps in &config.eps_schedule {
        radii.push((eps, euler_paths(x0, &config.with_eps(eps))?.radii()));
    }
    Ok(radii
        .windows(2)
        .map(|w| (w[0].0, w[1].0, wasserstein1(&w[0].1, &w[1].1)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn paths_are_reproducible_and_finite() {
        let p = ModelParams::new(3, 1.5, 5.0, 1e-3).unwrap();
        let c = SimConfig::new(p, 0.5, 2000, 9);
        let a = euler_paths(&[0.1, 0.0, 0.0], &c).unwrap();
        let b = euler_paths(&[0.1, 0.0, 0.0], &c).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.len(), 2000);
        assert!(a.data.iter().all(|v| v.is_finite()));
        assert!(a.substeps >= 2000 * 50);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = ModelParams::new(3, 1.5, 5.0, 1e-3).unwrap();
        let c = SimConfig::new(p, 0.5, 2000, 9);
        assert!(euler_paths(&[0.1, 0.0], &c).is_err());
        assert!(estimate_kernel(&[0.0; 3], &[vec![1.0, 0.0, 0.0]], &c).is_err());
    }
}
