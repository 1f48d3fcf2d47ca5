//! Strang-split pseudospectral solver on the periodic box [−L/2, L/2)³.
//!
//! Forward direction: u_t = −(−Δ)^{α/2}u + b_ε·∇u, i.e. u(t) = e^{−tΛ}f, with the
//! transport solved semi-Lagrangian along the flow of b_ε. Fokker–Planck
//! direction: ρ_t = −(−Δ)^{α/2}ρ − div(b_ε ρ), i.e. ρ(t) = e^{−tΛ*}g, with a
//! conservative finite-volume transport.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{GridSpec, SimConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Scalar field on the periodic grid; index (i, j, k) ↦ (i·n + j)·n + k with
/// coordinate −L/2 + i·dx along the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3 {
    pub n: usize,
    pub box_size: f64,
    pub data: Vec<f64>,
}

/// JSON sidecar of a binary snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub shape: [usize; 3],
    pub box_size: f64,
    pub spacing: f64,
    pub origin: f64,
    pub t: f64,
    pub dtype: String,
    pub order: String,
}

impl Field3 {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            n: grid.points,
            box_size: grid.box_size,
            data: vec![0.0; grid.points.pow(3)],
        }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64 + Sync>(grid: GridSpec, f: F) -> Self {
        let mut field = Self::zeros(grid);
        let n = field.n;
        let (dx, o) = (field.dx(), -0.5 * field.box_size);
        field.data.par_iter_mut().enumerate().for_each(|(idx, v)| {
            let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
            *v = f([o + i as f64 * dx, o + j as f64 * dx, o + k as f64 * dx]);
        });
        field
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            box_size: self.box_size,
            points: self.n,
        }
    }

    pub fn dx(&self) -> f64 {
        self.box_size / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.box_size + i as f64 * self.dx()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(3)
    }

    /// ∫ f over the box.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.cell_volume()
    }

    /// ∫ f g over the box.
    pub fn inner(&self, other: &Field3) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum::<f64>() * self.cell_volume()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.max_abs();
        }
        (self.data.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.cell_volume()).powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Pointwise product with a function of position.
    pub fn weighted<F: Fn([f64; 3]) -> f64 + Sync>(&self, w: F) -> Field3 {
        let g = Field3::from_fn(self.grid(), w);
        Field3 {
            data: self.data.iter().zip(&g.data).map(|(a, b)| a * b).collect(),
            ..self.clone()
        }
    }

    /// Fraction of ∫|f| lying outside the central cube [−L/4, L/4]³.
    pub fn margin_mass(&self) -> f64 {
        let n = self.n;
        let q = 0.25 * self.box_size;
        let mut inside = 0.0;
        let mut total = 0.0;
        for (idx, v) in self.data.iter().enumerate() {
            let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
            let a = v.abs();
            total += a;
            if [i, j, k].iter().all(|&m| self.coord(m).abs() <= q) {
                inside += a;
            }
        }
        if total > 0.0 {
            1.0 - inside / total
        } else {
            0.0
        }
    }

    /// Tricubic Lagrange interpolation at an arbitrary point (periodic).
    pub fn value_at(&self, p: &[f64]) -> f64 {
        let s = [0, 1, 2].map(|a| (p[a] + 0.5 * self.box_size) / self.dx());
        tricubic(&self.data, self.n, s, false)
    }

    /// Writes `<stem>.bin` (little-endian f64, row-major) and `<stem>.json`.
    pub fn write_snapshot(&self, stem: &Path, t: f64) -> Result<()> {
        let meta = SnapshotMeta {
            shape: [self.n; 3],
            box_size: self.box_size,
            spacing: self.dx(),
            origin: -0.5 * self.box_size,
            t,
            dtype: "f64-le".into(),
            order: "row-major (x1, x2, x3)".into(),
        };
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        crate::io::write_atomic(&stem.with_extension("bin"), &bytes)?;
        let json = serde_json::to_vec_pretty(&meta)?;
        crate::io::write_atomic(&stem.with_extension("json"), &json)?;
        Ok(())
    }

    pub fn read_snapshot(stem: &Path) -> Result<(Field3, SnapshotMeta)> {
        let meta: SnapshotMeta = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
        let bytes = fs::read(stem.with_extension("bin"))?;
        let n = meta.shape[0];
        if bytes.len() != 8 * n * n * n {
            return Err(Error::Io("snapshot size does not match its sidecar".into()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight bytes")))
            .collect();
        Ok((
            Field3 {
                n,
                box_size: meta.box_size,
                data,
            },
            meta,
        ))
    }
}

#[inline]
fn lagrange4(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Tricubic interpolation at fractional index `s`; with `clip` the value is
/// limited to the range of the eight surrounding nodes.
fn tricubic(data: &[f64], n: usize, s: [f64; 3], clip: bool) -> f64 {
    let base = s.map(|v| v.floor());
    let w = [0, 1, 2].map(|a| lagrange4(s[a] - base[a]));
    let b = base.map(|v| v as isize);
    let mut acc = 0.0;
    for (a, wa) in w[0].iter().enumerate() {
        let i = wrap(b[0] + a as isize - 1, n);
        for (bb, wb) in w[1].iter().enumerate() {
            let j = wrap(b[1] + bb as isize - 1, n);
            let row = (i * n + j) * n;
            let mut line = 0.0;
            for (c, wc) in w[2].iter().enumerate() {
                line += wc * data[row + wrap(b[2] + c as isize - 1, n)];
            }
            acc += wa * wb * line;
        }
    }
    if !clip {
        return acc;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in 0..2 {
        for bb in 0..2 {
            for c in 0..2 {
                let v = data[(wrap(b[0] + a, n) * n + wrap(b[1] + bb, n)) * n + wrap(b[2] + c, n)];
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    acc.clamp(lo, hi)
}

/// 3-d FFT by 1-d passes along each axis.
struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inverse } else { &self.forward };
        // Last axis: contiguous lines.
        buf.par_chunks_mut(n).for_each(|line| plan.process(line));
        // Middle axis: within each slab of n² values.
        buf.par_chunks_mut(n * n).for_each(|slab| {
            let mut line = vec![Complex::new(0.0, 0.0); n];
            for k in 0..n {
                for j in 0..n {
                    line[j] = slab[j * n + k];
                }
                plan.process(&mut line);
                for j in 0..n {
                    slab[j * n + k] = line[j];
                }
            }
        });
        // First axis: stride n².
        let nn = n * n;
        let mut lines: Vec<Vec<Complex<f64>>> = (0..nn)
            .into_par_iter()
            .map(|jk| {
                let mut line: Vec<Complex<f64>> = (0..n).map(|i| buf[i * nn + jk]).collect();
                plan.process(&mut line);
                line
            })
            .collect();
        for (jk, line) in lines.iter_mut().enumerate() {
            for i in 0..n {
                buf[i * nn + jk] = line[i];
            }
        }
    }
}

fn wavenumbers(n: usize, box_size: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * std::f64::consts::PI * m / box_size
        })
        .collect()
}

/// Applies e^{−h|ξ|^α} (the multiplier is precomputed for one step size).
struct SpectralStep {
    fft: Fft3,
    multiplier: Vec<f64>,
}

impl SpectralStep {
    fn new(grid: GridSpec, alpha: f64, h: f64) -> Self {
        let n = grid.points;
        let k = wavenumbers(n, grid.box_size);
        let mut multiplier = vec![0.0; n * n * n];
        multiplier.par_iter_mut().enumerate().for_each(|(idx, m)| {
            let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
            let k2 = k[i] * k[i] + k[j] * k[j] + k[l] * k[l];
            *m = (-h * k2.powf(0.5 * alpha)).exp() / (n * n * n) as f64;
        });
        Self {
            fft: Fft3::new(n),
            multiplier,
        }
    }

    fn apply(&self, data: &mut [f64]) {
        let mut buf: Vec<Complex<f64>> = data.iter().map(|v| Complex::new(*v, 0.0)).collect();
        self.fft.transform(&mut buf, false);
        buf.par_iter_mut().zip(&self.multiplier).for_each(|(c, m)| *c *= m);
        self.fft.transform(&mut buf, true);
        data.par_iter_mut().zip(&buf).for_each(|(v, c)| *v = c.re);
    }
}

/// Radial flow of b_ε over time `h` (negative h integrates backward), by RK4
/// with the logarithmic rate per substep held below 0.02.
pub(crate) fn radial_flow(p: &ModelParams, r: f64, h: f64) -> f64 {
    if r == 0.0 || p.kappa == 0.0 || h == 0.0 {
        return r;
    }
    let rate = |r: f64| p.kappa * (r * r + p.eps).powf(-0.5 * p.alpha);
    let f = |r: f64| r * rate(r);
    let sign = h.signum();
    let mut left = h.abs();
    let mut x = r;
    while left > 0.0 {
        let dt = sign * left.min(0.02 / rate(x));
        let k1 = f(x);
        let k2 = f(x + 0.5 * dt * k1);
        let k3 = f(x + 0.5 * dt * k2);
        let k4 = f(x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        left -= dt.abs();
        if x <= 0.0 {
            return 0.0;
        }
    }
    x
}

/// Semi-Lagrangian step u ↦ u∘Φ_h with clipped tricubic interpolation.
struct ForwardTransport {
    feet: Vec<[f64; 3]>,
}

impl ForwardTransport {
    fn new(grid: GridSpec, p: &ModelParams, h: f64) -> Self {
        let n = grid.points;
        let dx = grid.box_size / n as f64;
        let o = -0.5 * grid.box_size;
        let feet = (0..n * n * n)
            .into_par_iter()
            .map(|idx| {
                let x = [idx / (n * n), (idx / n) % n, idx % n].map(|i| o + i as f64 * dx);
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                let scale = if r > 0.0 { radial_flow(p, r, h) / r } else { 1.0 };
                x.map(|v| (v * scale - o) / dx)
            })
            .collect();
        Self { feet }
    }

    fn apply(&self, data: &mut Vec<f64>, n: usize) {
        let old = std::mem::take(data);
        *data = self.feet.par_iter().map(|s| tricubic(&old, n, *s, true)).collect();
    }
}

/// Conservative MUSCL finite-volume transport for ρ_t + div(b_ε ρ) = 0 with SSP-RK2.
struct ConservativeTransport {
    n: usize,
    dx: f64,
    /// Face velocities b_a at x + (dx/2)e_a, one array per axis.
    faces: [Vec<f64>; 3],
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

impl ConservativeTransport {
    fn new(grid: GridSpec, p: &ModelParams) -> Self {
        let n = grid.points;
        let dx = grid.box_size / n as f64;
        let o = -0.5 * grid.box_size;
        let faces = [0usize, 1, 2].map(|axis| {
            (0..n * n * n)
                .into_par_iter()
                .map(|idx| {
                    let mut x = [idx / (n * n), (idx / n) % n, idx % n].map(|i| o + i as f64 * dx);
                    x[axis] += 0.5 * dx;
                    let re2 = x.iter().map(|v| v * v).sum::<f64>() + p.eps;
                    p.kappa * re2.powf(-0.5 * p.alpha) * x[axis]
                })
                .collect()
        });
        Self { n, dx, faces }
    }

    fn max_speed(&self) -> f64 {
        self.faces
            .iter()
            .flat_map(|f| f.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// −div(bρ) by upwinded limited reconstruction.
    fn rhs(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.n;
        let strides = [n * n, n, 1];
        let idx3 = |idx: usize| [idx / (n * n), (idx / n) % n, idx % n];
        let shift = |idx: usize, axis: usize, d: isize| -> usize {
            let c = idx3(idx);
            let m = wrap(c[axis] as isize + d, n);
            idx - c[axis] * strides[axis] + m * strides[axis]
        };
        let flux = |idx: usize, axis: usize| -> f64 {
            // Face between idx and idx + e_axis.
            let v = self.faces[axis][idx];
            if v >= 0.0 {
                let (l, c, r) = (rho[shift(idx, axis, -1)], rho[idx], rho[shift(idx, axis, 1)]);
                v * (c + 0.5 * minmod(c - l, r - c))
            } else {
                let (c, r, rr) = (rho[idx], rho[shift(idx, axis, 1)], rho[shift(idx, axis, 2)]);
                v * (r - 0.5 * minmod(r - c, rr - r))
            }
        };
        let mut fluxes: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (axis, f) in fluxes.iter_mut().enumerate() {
            *f = (0..n * n * n).into_par_iter().map(|idx| flux(idx, axis)).collect();
        }
        (0..n * n * n)
            .into_par_iter()
            .map(|idx| {
                let mut div = 0.0;
                for axis in 0..3 {
                    div += fluxes[axis][idx] - fluxes[axis][shift(idx, axis, -1)];
                }
                -div / self.dx
            })
            .collect()
    }

    fn apply(&self, rho: &mut [f64], h: f64) {
        let k1 = self.rhs(rho);
        let stage: Vec<f64> = rho.iter().zip(&k1).map(|(r, k)| r + h * k).collect();
        let k2 = self.rhs(&stage);
        rho.par_iter_mut()
            .zip(stage.par_iter().zip(&k2))
            .for_each(|(r, (s, k))| *r = 0.5 * *r + 0.5 * (s + h * k));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// u(t) = e^{−tΛ}f
    Forward,
    /// ρ(t) = e^{−tΛ*}g
    FokkerPlanck,
}

/// Output of a propagation with per-step diagnostics.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub field: Field3,
    pub step: f64,
    pub steps: usize,
    /// (time, field) at the requested save times.
    pub snapshots: Vec<(f64, Field3)>,
    /// max, min and ∫ after every step, starting with the initial field.
    pub max_history: Vec<f64>,
    pub min_history: Vec<f64>,
    pub mass_history: Vec<f64>,
    pub margin_mass: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PropagateOptions {
    /// Times (multiples of the step) at which to keep snapshots.
    pub save_times: Vec<f64>,
    /// Overrides the automatic step choice.
    pub step: Option<f64>,
}

/// Largest |b_ε| over R³ (attained at r² = ε/(α−1)).
pub fn max_drift_speed(p: &ModelParams) -> f64 {
    if p.kappa == 0.0 {
        return 0.0;
    }
    let r = (p.eps / (p.alpha - 1.0)).sqrt();
    p.kappa * r * (r * r + p.eps).powf(-0.5 * p.alpha)
}

pub fn propagate(f0: &Field3, direction: Direction, config: &SimConfig) -> Result<Field3> {
    Ok(propagate_with(f0, direction, config, &PropagateOptions::default())?.field)
}

pub fn propagate_with(
    f0: &Field3,
    direction: Direction,
    config: &SimConfig,
    opts: &PropagateOptions,
) -> Result<Propagation> {
    config.validate()?;
    let p = &config.params;
    if p.d != 3 {
        return Err(Error::Config("the grid backend is three-dimensional".into()));
    }
    if p.kappa > 0.0 && !(p.eps > 0.0) {
        return Err(Error::Config("the grid backend needs eps > 0".into()));
    }
    if !f0.n.is_power_of_two() || f0.n < 8 {
        return Err(Error::Config("grid points per axis must be a power of two".into()));
    }
    let grid = f0.grid();
    let dx = f0.dx();
    let t = config.t_final;
    let bmax = max_drift_speed(p);
    let h = match opts.step.or(config.dt) {
        Some(h) => {
            if direction == Direction::FokkerPlanck && bmax * h > 0.5 * dx {
                return Err(Error::Config(format!(
                    "CFL violation: max|b_eps|·h = {:.4} exceeds half the grid spacing {:.4}",
                    bmax * h,
                    0.5 * dx
                )));
            }
            h
        }
        None => {
            let mut h = (t / 100.0).min(0.01);
            if bmax > 0.0 {
                h = h.min(0.45 * dx / bmax);
            }
            h
        }
    };
    let steps = (t / h - 1e-9).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    if direction == Direction::FokkerPlanck && bmax * h > 0.5 * dx {
        return Err(Error::Config("CFL violation after step rounding".into()));
    }
    let diffusion = SpectralStep::new(grid, p.alpha, h);
    let mut data = f0.data.clone();
    let n = f0.n;
    let mut out = Propagation {
        field: f0.clone(),
        step: h,
        steps,
        snapshots: Vec::new(),
        max_history: vec![f0.max()],
        min_history: vec![f0.min()],
        mass_history: vec![f0.integral()],
        margin_mass: 0.0,
    };
    let vol = f0.cell_volume();
    let record = |out: &mut Propagation, data: &[f64], k: usize| {
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in data {
            lo = lo.min(*v);
            hi = hi.max(*v);
            sum += v;
        }
        out.max_history.push(hi);
        out.min_history.push(lo);
        out.mass_history.push(sum * vol);
        let now = k as f64 * h;
        for &s in &opts.save_times {
            if (s - now).abs() <= 0.5 * h {
                out.snapshots.push((
                    now,
                    Field3 {
                        n,
                        box_size: f0.box_size,
                        data: data.to_vec(),
                    },
                ));
            }
        }
    };
    match direction {
        Direction::Forward => {
            let half = (p.kappa > 0.0).then(|| ForwardTransport::new(grid, p, 0.5 * h));
            for k in 1..=steps {
                if let Some(tr) = &half {
                    tr.apply(&mut data, n);
                }
                let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), v| {
                    (l.min(*v), u.max(*v))
                });
                diffusion.apply(&mut data);
                data.par_iter_mut().for_each(|v| *v = v.clamp(lo, hi));
                if let Some(tr) = &half {
                    tr.apply(&mut data, n);
                }
                record(&mut out, &data, k);
            }
        }
        Direction::FokkerPlanck => {
            let tr = (p.kappa > 0.0).then(|| ConservativeTransport::new(grid, p));
            if let Some(tr) = &tr {
                if tr.max_speed() * h > 0.5 * dx {
                    return Err(Error::Config("CFL violation on the grid".into()));
                }
            }
            for k in 1..=steps {
                if let Some(tr) = &tr {
                    tr.apply(&mut data, 0.5 * h);
                }
                let nonneg = data.iter().all(|v| *v >= 0.0);
                diffusion.apply(&mut data);
                if nonneg {
                    restore_positivity(&mut data);
                }
                if let Some(tr) = &tr {
                    tr.apply(&mut data, 0.5 * h);
                }
                record(&mut out, &data, k);
            }
        }
    }
    out.field = Field3 {
        n,
        box_size: f0.box_size,
        data,
    };
    out.margin_mass = out.field.margin_mass();
    Ok(out)
}

/// Zeroes spectral undershoots and rescales the positive part so that the sum
/// is unchanged.
fn restore_positivity(data: &mut [f64]) {
    let total: f64 = data.iter().sum();
    let positive: f64 = data.iter().filter(|v| **v > 0.0).sum();
    if positive <= 0.0 || positive == total {
        return;
    }
    let scale = total / positive;
    data.par_iter_mut().for_each(|v| *v = if *v > 0.0 { *v * scale } else { 0.0 });
}

/// Normalized Gaussian bump of width `sigma` centred at `c`.
pub fn gaussian_bump(grid: GridSpec, c: [f64; 3], sigma: f64) -> Field3 {
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-1.5);
    Field3::from_fn(grid, |x| {
        let r2: f64 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum();
        norm * (-r2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Report of the contraction and ultracontractivity check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    pub grid_points: usize,
    /// Largest ‖u(t)‖_r / ‖f0‖_r for r = 1, 2, ∞ over all slices.
    pub max_ratio_l1: f64,
    pub max_ratio_l2: f64,
    pub max_ratio_linf: f64,
    /// min u(t) / ‖f0‖_∞ over all slices.
    pub min_relative: f64,
    /// sup over t ∈ [0.1, t_final] of ‖u(t)‖_∞ t^{d/α} / ‖f0‖₁.
    pub c_n: f64,
    pub passed: bool,
    pub offending_slice: Option<f64>,
}

/// Forward-propagates nonnegative bumps and checks L^r contraction, positivity
/// and the 1 → ∞ bound.
pub fn contraction_and_ultracontractivity_check(config: &SimConfig, bumps: &[([f64; 3], f64)]) -> Result<ContractionReport> {
    let p = &config.params;
    let grid = config.grid;
    let mut rep = ContractionReport {
        grid_points: grid.points,
        max_ratio_l1: 0.0,
        max_ratio_l2: 0.0,
        max_ratio_linf: 0.0,
        min_relative: f64::INFINITY,
        c_n: 0.0,
        passed: true,
        offending_slice: None,
    };
    let tol = 1e-3;
    for &(c, sigma) in bumps {
        let f0 = gaussian_bump(grid, c, sigma);
        let h = config.base_dt();
        let steps = (config.t_final / h).round().max(1.0) as usize;
        let save: Vec<f64> = (1..=steps).map(|k| k as f64 * config.t_final / steps as f64).collect();
        let run = propagate_with(
            &f0,
            Direction::Forward,
            config,
            &PropagateOptions {
                save_times: save,
                step: None,
            },
        )?;
        let norms0 = [f0.lp_norm(1.0), f0.lp_norm(2.0), f0.max_abs()];
        for (t, u) in &run.snapshots {
            let r = [u.lp_norm(1.0) / norms0[0], u.lp_norm(2.0) / norms0[1], u.max_abs() / norms0[2]];
            rep.max_ratio_l1 = rep.max_ratio_l1.max(r[0]);
            rep.max_ratio_l2 = rep.max_ratio_l2.max(r[1]);
            rep.max_ratio_linf = rep.max_ratio_linf.max(r[2]);
            rep.min_relative = rep.min_relative.min(u.min() / norms0[2]);
            if *t >= 0.1 - 1e-12 {
                rep.c_n = rep.c_n.max(u.max_abs() * t.powf(p.d as f64 / p.alpha) / norms0[0]);
            }
            let bad = r.iter().any(|v| *v > 1.0 + tol) || u.min() < -1e-10 * norms0[2];
            if bad && rep.passed {
                rep.passed = false;
                rep.offending_slice = Some(*t);
            }
        }
    }
    Ok(rep)
}

/// Periodized free evolution (κ = 0) of the Gaussian bump of width σ at the
/// origin, from the radial Fourier inversion of e^{−tρ^α − σ²ρ²/2}.
pub fn free_gaussian_oracle(grid: GridSpec, alpha: f64, sigma: f64, t: f64) -> Result<Field3> {
    use crate::quad::GaussLegendre;
    use crate::stable_kernel::StableKernelTable;
    let pi = std::f64::consts::PI;
    let l = grid.box_size;
    // Radial profile g(r) on a fine grid covering the 27 nearest images.
    let r_max = 3f64.sqrt() * 1.5 * l + 1.0;
    let m = 16_384usize;
    let dr = r_max / m as f64;
    let gl = GaussLegendre::cached(24);
    let mut rho_max = 50f64;
    while t * rho_max.powf(alpha) + 0.5 * sigma * sigma * rho_max * rho_max < 45.0 {
        rho_max *= 1.5;
    }
    let profile = |r: f64| -> f64 {
        let env = |rho: f64| (-t * rho.powf(alpha) - 0.5 * sigma * sigma * rho * rho).exp() * rho;
        if r < 1e-8 {
            // g(0) = (2π²)^{−1} ∫ e^{…} ρ² dρ
            let mut acc = 0.0;
            let mut a = 0.0;
            let mut hi = 1e-6;
            acc += gl.integrate(a, hi, |rho| env(rho) * rho);
            a = hi;
            while a < rho_max {
                hi = (2.0 * a).min(a + 0.25);
                acc += gl.integrate(a, hi, |rho| env(rho) * rho);
                a = hi;
            }
            return acc / (2.0 * pi * pi);
        }
        let width = (pi / r).min(0.25);
        let mut acc = 0.0;
        let mut hi = width;
        for _ in 0..40 {
            acc += gl.integrate(0.5 * hi, hi, |rho| env(rho) * (rho * r).sin());
            hi *= 0.5;
        }
        let mut a = width;
        while a < rho_max {
            acc += gl.integrate(a, a + width, |rho| env(rho) * (rho * r).sin());
            a += width;
        }
        acc / (2.0 * pi * pi * r)
    };
    let table: Vec<f64> = (0..=m + 2).into_par_iter().map(|i| profile(i as f64 * dr)).collect();
    let near = |r: f64| -> f64 {
        let s = r / dr;
        let i = (s.floor() as usize).clamp(1, m);
        let f = s - i as f64;
        let w = lagrange4(f);
        (0..4).map(|a| w[a] * table[i + a - 1]).sum()
    };
    // Images with max-norm index 2..=8 use the free kernel; the rest is uniform.
    let kernel = StableKernelTable::cached(alpha)?;
    let coarse = 9usize;
    let far_at = |x: [f64; 3]| -> f64 {
        let mut acc = 0.0;
        for a in -8i32..=8 {
            for b in -8i32..=8 {
                for c in -8i32..=8 {
                    if a.abs().max(b.abs()).max(c.abs()) < 2 {
                        continue;
                    }
                    let y = [x[0] + a as f64 * l, x[1] + b as f64 * l, x[2] + c as f64 * l];
                    acc += kernel.kernel_radial(t, (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt());
                }
            }
        }
        acc
    };
    let nodes: Vec<f64> = (0..coarse.pow(3))
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx / (coarse * coarse), (idx / coarse) % coarse, idx % coarse);
            let q = |v: usize| -0.5 * l + l * v as f64 / (coarse - 1) as f64;
            far_at([q(i), q(j), q(k)])
        })
        .collect();
    // Remaining mass beyond the cube of half-side 8.5L, spread uniformly.
    let half = 8.5 * l;
    let c_tail = crate::stable_kernel::tail_coefficient(alpha) * t;
    let mut sphere = 0.0;
    let nth = 400;
    for i in 0..nth {
        let ct = -1.0 + 2.0 * (i as f64 + 0.5) / nth as f64;
        let st = (1.0 - ct * ct).sqrt();
        for j in 0..nth {
            let ph = 2.0 * pi * (j as f64 + 0.5) / nth as f64;
            let u = [st * ph.cos(), st * ph.sin(), ct];
            let mx = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            sphere += mx.powf(alpha) * (2.0 / nth as f64) * (2.0 * pi / nth as f64);
        }
    }
    let remote = c_tail * half.powf(-alpha) / alpha * sphere / l.powi(3);
    let field = Field3::from_fn(grid, |x| {
        let mut acc = 0.0;
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                for c in -1i32..=1 {
                    let y = [x[0] + a as f64 * l, x[1] + b as f64 * l, x[2] + c as f64 * l];
                    acc += near((y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt());
                }
            }
        }
        // Trilinear interpolation of the far-image sum.
        let s = x.map(|v| ((v + 0.5 * l) / l * (coarse - 1) as f64).clamp(0.0, (coarse - 1) as f64 - 1e-12));
        let b = s.map(|v| v.floor() as usize);
        let f = [0, 1, 2].map(|a| s[a] - b[a] as f64);
        let mut far = 0.0;
        for da in 0..2 {
            for db in 0..2 {
                for dc in 0..2 {
                    let w = (if da == 1 { f[0] } else { 1.0 - f[0] })
                        * (if db == 1 { f[1] } else { 1.0 - f[1] })
                        * (if dc == 1 { f[2] } else { 1.0 - f[2] });
                    far += w * nodes[((b[0] + da) * coarse + b[1] + db) * coarse + b[2] + dc];
                }
            }
        }
        acc + far + remote
    });
    Ok(field)
}

/// Box choice for a start at distance `offset` (sup norm) from the centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxChoice {
    pub grid: GridSpec,
    pub doublings: usize,
    /// Predicted free-kernel mass outside the L/4 margin at t.
    pub predicted_margin_mass: f64,
    /// False when no allowed box meets the tolerance; the input box is kept.
    pub meets_tolerance: bool,
}

/// Doubles L (keeping N) at most `max_doublings` times until the free kernel
/// started at `offset` puts less than `tol` outside the L/4 margin at time t.
/// If no allowed box qualifies the input box is returned unchanged.
pub fn box_for_margin(grid: GridSpec, alpha: f64, t: f64, offset: f64, tol: f64, max_doublings: usize) -> Result<BoxChoice> {
    let table = crate::stable_kernel::StableKernelTable::cached(alpha)?;
    let outside = |g: GridSpec| {
        let r = 0.25 * g.box_size - offset;
        if r <= 0.0 {
            1.0
        } else {
            (1.0 - table.radial_cdf_at(t, r)).max(0.0)
        }
    };
    for k in 0..=max_doublings {
        let g = GridSpec {
            box_size: grid.box_size * (1u64 << k) as f64,
            ..grid
        };
        let m = outside(g);
        if m < tol {
            return Ok(BoxChoice {
                grid: g,
                doublings: k,
                predicted_margin_mass: m,
                meets_tolerance: true,
            });
        }
    }
    Ok(BoxChoice {
        grid,
        doublings: 0,
        predicted_margin_mass: outside(grid),
        meets_tolerance: false,
    })
}

/// Relative L¹ distance ∑|a − b| / ∑|b|.
pub fn relative_l1(a: &Field3, b: &Field3) -> f64 {
    let num: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = b.data.iter().map(|y| y.abs()).sum();
    num / den
}

/// Mollified delta at `x`: a Gaussian of width three grid spacings.
pub fn mollified_delta(grid: GridSpec, x: [f64; 3]) -> Field3 {
    gaussian_bump(grid, x, 3.0 * grid.box_size / grid.points as f64)
}
