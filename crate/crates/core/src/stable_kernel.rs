//! The free stable kernel e^{−tA}(x, y) in d = 3, its envelopes, and numerical
//! checks of the kernel estimates with empirical constants.
//!
//! p₁ is the density with characteristic function e^{−|ξ|^α}. In d = 3 the
//! radial Fourier inversion reduces to a sine transform,
//! p₁(r) = (2π²r)^{−1} ∫₀^∞ e^{−ρ^α} ρ sin(ρr) dρ.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::norm;
use crate::quad;
use crate::sampler::{stable_increment_into, RngStream};
use crate::specfun::{gamma_constant, gamma_unchecked, ln_gamma_unchecked};

/// Dimension of the deterministic kernel path.
pub const D: usize = 3;

const SERIES_RADIUS: f64 = 0.5;
const ASYMPTOTIC_RADIUS: f64 = 20.0;
const GL_ORDER: usize = 24;

fn check_alpha(func: &'static str, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(domain(func, format!("alpha must lie in (0, 2], got {alpha}")));
    }
    Ok(())
}

/// p₁(0) = Γ(3/α)/(2π²α).
pub fn p1_at_origin(alpha: f64) -> f64 {
    gamma_unchecked(3.0 / alpha) / (2.0 * PI * PI * alpha)
}

/// Taylor series at the origin: (p, dp/dr).
fn series(r: f64, alpha: f64) -> (f64, f64) {
    let pref = 1.0 / (2.0 * PI * PI * alpha);
    let lr = r.ln();
    let mut p = 0.0;
    let mut dp = 0.0;
    for k in 0..400usize {
        let kf = k as f64;
        let lmag = ln_gamma_unchecked((2.0 * kf + 3.0) / alpha) - ln_gamma_unchecked(2.0 * kf + 2.0);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let term = if k == 0 {
            lmag.exp()
        } else {
            sign * (lmag + 2.0 * kf * lr).exp()
        };
        p += term;
        if k > 0 {
            dp += sign * 2.0 * kf * (lmag + (2.0 * kf - 1.0) * lr).exp();
        }
        if k > 2 && term.abs() < 1e-18 * p.abs() {
            break;
        }
    }
    (pref * p, pref * dp)
}

/// Large-r expansion (convergent for α ≤ 1, asymptotic for 1 < α < 2),
/// summed up to its smallest term: (p, dp/dr).
fn asymptotic(r: f64, alpha: f64) -> (f64, f64) {
    let lr = r.ln();
    let mut p = 0.0;
    let mut dp = 0.0;
    let mut prev = f64::INFINITY;
    for k in 1..5000usize {
        let kf = k as f64;
        let s = (0.5 * PI * alpha * kf).sin();
        let lmag = ln_gamma_unchecked(alpha * kf + 2.0) - ln_gamma_unchecked(kf + 1.0)
            - (alpha * kf + 3.0) * lr;
        let mag = lmag.exp();
        if mag > prev && k > 2 {
            break;
        }
        prev = mag;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * s * mag;
        p += term;
        dp -= term * (alpha * kf + 3.0) / r;
        if mag < 1e-18 * p.abs() {
            break;
        }
    }
    (p / (2.0 * PI * PI), dp / (2.0 * PI * PI))
}

/// Sine and cosine transforms I(r) = ∫e^{−ρ^α}ρ sin(ρr)dρ and
/// I'(r) = ∫e^{−ρ^α}ρ² cos(ρr)dρ, integrated panel by panel.
fn fourier_transforms(r: f64, alpha: f64) -> (f64, f64) {
    // Truncate where e^{−ρ^α}ρ² < 1e-18.
    let mut rho_max: f64 = 45f64.powf(1.0 / alpha);
    for _ in 0..20 {
        rho_max = (41.5 + 2.0 * rho_max.ln()).max(1.0).powf(1.0 / alpha);
    }
    let width = (PI / r).min(0.5);
    let gl = quad::GaussLegendre::cached(GL_ORDER);
    let mut i_sin = 0.0;
    let mut i_cos = 0.0;
    let mut panel = |a: f64, b: f64| {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let rho = mid + half * x;
            let env = (-rho.powf(alpha)).exp() * rho;
            let (s, c) = (rho * r).sin_cos();
            i_sin += w * half * env * s;
            i_cos += w * half * env * rho * c;
        }
    };
    // The first panel is graded toward 0, where ρ^α is not smooth.
    let mut hi = width;
    for _ in 0..40 {
        panel(0.5 * hi, hi);
        hi *= 0.5;
    }
    panel(0.0, hi);
    let mut a = width;
    while a < rho_max {
        let b = a + width;
        panel(a, b);
        a = b;
    }
    (i_sin, i_cos)
}

fn p1_and_slope(r: f64, alpha: f64) -> (f64, f64) {
    if r == 0.0 {
        return (p1_at_origin(alpha), 0.0);
    }
    // The origin series diverges for α < 1.
    if r <= SERIES_RADIUS && alpha >= 1.0 {
        return series(r, alpha);
    }
    // Past r = 8 the Gaussian sits below the quadrature's absolute error floor.
    if r >= ASYMPTOTIC_RADIUS || (alpha == 2.0 && r > 8.0) {
        if alpha == 2.0 {
            let p = (4.0 * PI).powf(-1.5) * (-0.25 * r * r).exp();
            return (p, -0.5 * r * p);
        }
        return asymptotic(r, alpha);
    }
    let (i_sin, i_cos) = fourier_transforms(r, alpha);
    let c = 1.0 / (2.0 * PI * PI);
    (c * i_sin / r, c * (i_cos / r - i_sin / (r * r)))
}

/// p₁(r) for d = 3 by direct evaluation (series near 0, sine-transform
/// quadrature in the bulk, large-r expansion in the tail).
pub fn p1_radial(r: f64, alpha: f64) -> Result<f64> {
    check_alpha("p1_radial", alpha)?;
    if !(r >= 0.0) {
        return Err(domain("p1_radial", format!("needs r >= 0, got {r}")));
    }
    Ok(p1_and_slope(r, alpha).0)
}

/// dp₁/dr for d = 3 by direct evaluation (differentiated transforms).
pub fn p1_radial_derivative(r: f64, alpha: f64) -> Result<f64> {
    check_alpha("p1_radial_derivative", alpha)?;
    if !(r >= 0.0) {
        return Err(domain("p1_radial_derivative", format!("needs r >= 0, got {r}")));
    }
    Ok(p1_and_slope(r, alpha).1)
}

/// Leading tail coefficient: p₁(r) ~ C r^{−3−α}.
pub fn tail_coefficient(alpha: f64) -> f64 {
    gamma_unchecked(alpha + 2.0) * (0.5 * PI * alpha).sin() / (2.0 * PI * PI)
}

/// Two-sided envelope t(r^{−d−α} ∧ t^{−(d+α)/α}).
pub fn envelope(d: usize, alpha: f64, t: f64, r: f64) -> f64 {
    let df = d as f64;
    let cap = t.powf(-(df + alpha) / alpha);
    if r == 0.0 {
        return t * cap;
    }
    t * r.powf(-df - alpha).min(cap)
}

/// E^t kernel t(r^{−d−α−1} ∧ t^{−(d+α+1)/α}).
pub fn e_kernel(d: usize, alpha: f64, t: f64, r: f64) -> f64 {
    let df = d as f64;
    let cap = t.powf(-(df + alpha + 1.0) / alpha);
    if r == 0.0 {
        return t * cap;
    }
    t * r.powf(-df - alpha - 1.0).min(cap)
}

/// Radial tabulation of p₁ with monotone cubic interpolation of ln p₁ against ln r.
#[derive(Debug, Clone)]
pub struct StableKernelTable {
    pub alpha: f64,
    pub d: usize,
    pub radii: Vec<f64>,
    pub p1_values: Vec<f64>,
    /// d ln p₁ / d ln r at the nodes (after the monotonicity limiter).
    pub log_slopes: Vec<f64>,
    pub tail_switch_radius: f64,
    log_r: Vec<f64>,
    log_p: Vec<f64>,
    cdf: Vec<f64>,
}

/// Fields of the CSV export.
#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    radius: f64,
    p1: f64,
    log_slope: f64,
}

impl StableKernelTable {
    pub const DEFAULT_POINTS: usize = 2048;
    pub const DEFAULT_R_MIN: f64 = 1e-4;
    pub const DEFAULT_R_MAX: f64 = 1e4;

    pub fn build(alpha: f64) -> Result<Self> {
        // The Gaussian underflows near r = 55; past the table it is evaluated directly.
        let r_max = if alpha == 2.0 { 50.0 } else { Self::DEFAULT_R_MAX };
        Self::build_with(alpha, Self::DEFAULT_POINTS, Self::DEFAULT_R_MIN, r_max)
    }

    pub fn build_with(alpha: f64, n: usize, r_min: f64, r_max: f64) -> Result<Self> {
        check_alpha("StableKernelTable", alpha)?;
        if n < 4 || !(r_min > 0.0 && r_max > r_min) {
            return Err(domain("StableKernelTable", "needs n >= 4 and 0 < r_min < r_max"));
        }
        let (l0, l1) = (r_min.ln(), r_max.ln());
        let radii: Vec<f64> = (0..n)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
            .collect();
        let mut p1_values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        for &r in &radii {
            let (p, dp) = p1_and_slope(r, alpha);
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Convergence {
                    func: "StableKernelTable",
                    msg: format!("non-positive p1 = {p:e} at r = {r:e}"),
                });
            }
            p1_values.push(p);
            slopes.push(r * dp / p);
        }
        Self::assemble(alpha, radii, p1_values, slopes)
    }

    fn assemble(alpha: f64, radii: Vec<f64>, p1_values: Vec<f64>, mut slopes: Vec<f64>) -> Result<Self> {
        let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let log_p: Vec<f64> = p1_values.iter().map(|p| p.ln()).collect();
        for w in log_p.windows(2) {
            if !(w[1] < w[0]) {
                return Err(domain("StableKernelTable", "tabulated p1 must be strictly decreasing"));
            }
        }
        // Fritsch–Carlson limiter on the (already exact) slopes.
        for i in 0..radii.len() - 1 {
            let delta = (log_p[i + 1] - log_p[i]) / (log_r[i + 1] - log_r[i]);
            slopes[i] = slopes[i].min(0.0);
            slopes[i + 1] = slopes[i + 1].min(0.0);
            let a = slopes[i] / delta;
            let b = slopes[i + 1] / delta;
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                slopes[i] = tau * a * delta;
                slopes[i + 1] = tau * b * delta;
            }
        }
        let tail_switch_radius = *radii.last().unwrap_or(&ASYMPTOTIC_RADIUS);
        let mut table = Self {
            alpha,
            d: D,
            radii,
            p1_values,
            log_slopes: slopes,
            tail_switch_radius,
            log_r,
            log_p,
            cdf: Vec::new(),
        };
        table.cdf = table.cumulative();
        Ok(table)
    }

    /// Shared, lazily built default table for `alpha`.
    pub fn cached(alpha: f64) -> Result<Arc<StableKernelTable>> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<StableKernelTable>>>> = OnceLock::new();
        let map = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = map.lock().expect("table cache poisoned").get(&alpha.to_bits()) {
            return Ok(t.clone());
        }
        let table = Arc::new(Self::build(alpha)?);
        map.lock()
            .expect("table cache poisoned")
            .insert(alpha.to_bits(), table.clone());
        Ok(table)
    }

    fn r_min(&self) -> f64 {
        self.radii[0]
    }

    fn locate(&self, lr: f64) -> usize {
        let n = self.log_r.len();
        let h = (self.log_r[n - 1] - self.log_r[0]) / (n - 1) as f64;
        (((lr - self.log_r[0]) / h).floor() as usize).min(n - 2)
    }

    /// (ln p₁, d ln p₁/d ln r) by cubic Hermite interpolation.
    fn hermite(&self, lr: f64) -> (f64, f64) {
        let i = self.locate(lr);
        let (x0, x1) = (self.log_r[i], self.log_r[i + 1]);
        let h = x1 - x0;
        let s = (lr - x0) / h;
        let (y0, y1) = (self.log_p[i], self.log_p[i + 1]);
        let (m0, m1) = (self.log_slopes[i] * h, self.log_slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let val = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        let der = ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h;
        (val, der)
    }

    /// (p₁(r), dp₁/dr) from the table, with the series below the first node and
    /// the tail expansion beyond the last.
    pub fn p1_with_derivative(&self, r: f64) -> (f64, f64) {
        if r < self.r_min() {
            return p1_and_slope(r, self.alpha);
        }
        if r > self.tail_switch_radius {
            return p1_and_slope(r, self.alpha);
        }
        let (lp, slope) = self.hermite(r.ln());
        let p = lp.exp();
        (p, p * slope / r)
    }

    pub fn p1(&self, r: f64) -> f64 {
        self.p1_with_derivative(r).0
    }

    /// p_t(r) = t^{−d/α} p₁(t^{−1/α} r).
    pub fn kernel_radial(&self, t: f64, r: f64) -> f64 {
        let scale = t.powf(-1.0 / self.alpha);
        scale.powi(D as i32) * self.p1(r * scale)
    }

    /// e^{−tA}(x, y) = t^{−d/α} p₁(t^{−1/α}|x − y|).
    pub fn kernel(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(domain("kernel", format!("needs t > 0, got {t}")));
        }
        if x.len() != D || y.len() != D {
            return Err(domain("kernel", "points must be three-dimensional"));
        }
        let r = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        Ok(self.kernel_radial(t, r))
    }

    /// |∂_r p_t(r)|; zero at r = 0 by radial symmetry.
    pub fn grad_kernel(&self, t: f64, r: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(domain("grad_kernel", format!("needs t > 0, got {t}")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let scale = t.powf(-1.0 / self.alpha);
        Ok((scale.powi(D as i32 + 1) * self.p1_with_derivative(r * scale).1).abs())
    }

    /// Signed radial derivative ∂_r p_t(r).
    pub fn radial_derivative(&self, t: f64, r: f64) -> f64 {
        let scale = t.powf(-1.0 / self.alpha);
        scale.powi(D as i32 + 1) * self.p1_with_derivative(r * scale).1
    }

    fn shell_density(&self, r: f64) -> f64 {
        4.0 * PI * r * r * self.p1(r)
    }

    fn cumulative(&self) -> Vec<f64> {
        let r0 = self.r_min();
        let mut acc = 4.0 * PI * p1_at_origin(self.alpha) * r0.powi(3) / 3.0;
        let mut out = Vec::with_capacity(self.radii.len());
        out.push(acc);
        for w in self.radii.windows(2) {
            acc += quad::gauss(8, w[0], w[1], |r| self.shell_density(r));
            out.push(acc);
        }
        out
    }

    fn tail_mass(&self, r: f64) -> f64 {
        if self.alpha == 2.0 {
            // Gaussian tail of the radial law, by quadrature to a far cutoff.
            return quad::adaptive_simpson(&|s: f64| self.shell_density(s), r, r + 60.0, 1e-18);
        }
        // Integrate the tail expansion term by term: ∫ 4πr² r^{−αk−3} = 4π R^{−αk}/(αk).
        let lr = r.ln();
        let mut acc = 0.0;
        let mut prev = f64::INFINITY;
        for k in 1..5000usize {
            let kf = k as f64;
            let lmag = ln_gamma_unchecked(self.alpha * kf + 2.0) - ln_gamma_unchecked(kf + 1.0)
                - self.alpha * kf * lr;
            let mag = lmag.exp() / (self.alpha * kf);
            if mag > prev && k > 2 {
                break;
            }
            prev = mag;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * (0.5 * PI * self.alpha * kf).sin() * mag;
            if mag < 1e-18 {
                break;
            }
        }
        4.0 * PI * acc / (2.0 * PI * PI)
    }

    /// ∫ p₁ over R³: tabulated part, a ball below the first node and the tail.
    pub fn normalization(&self) -> f64 {
        self.cdf.last().copied().unwrap_or(0.0) + self.tail_mass(self.tail_switch_radius)
    }

    /// P(|Z| ≤ r) for Z with density p₁.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r < self.r_min() {
            return 4.0 * PI * p1_at_origin(self.alpha) * r.powi(3) / 3.0;
        }
        if r >= self.tail_switch_radius {
            return 1.0 - self.tail_mass(r);
        }
        let i = self.locate(r.ln());
        let base = self.cdf[i];
        (base + quad::gauss(8, self.radii[i], r, |s| self.shell_density(s))).min(1.0)
    }

    /// P(|Z_t| ≤ r) at time t.
    pub fn radial_cdf_at(&self, t: f64, r: f64) -> f64 {
        self.radial_cdf(r * t.powf(-1.0 / self.alpha))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for i in 0..self.radii.len() {
            wr.serialize(TableRow {
                radius: self.radii[i],
                p1: self.p1_values[i],
                log_slope: self.log_slopes[i],
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(alpha: f64, r: R) -> Result<Self> {
        check_alpha("StableKernelTable::read_csv", alpha)?;
        let mut rd = csv::Reader::from_reader(r);
        let mut radii = Vec::new();
        let mut values = Vec::new();
        let mut slopes = Vec::new();
        for row in rd.deserialize() {
            let row: TableRow = row.map_err(|e| Error::Io(e.to_string()))?;
            radii.push(row.radius);
            values.push(row.p1);
            slopes.push(row.log_slope);
        }
        if radii.len() < 4 {
            return Err(domain("StableKernelTable::read_csv", "fewer than four rows"));
        }
        Self::assemble(alpha, radii, values, slopes)
    }
}

/// An estimated constant together with its design and refinement history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConstant {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub design: String,
    /// Values at successive refinements, coarsest first; the last equals `value`.
    pub refinement_trend: Vec<f64>,
    pub inconclusive: bool,
}

impl EmpiricalConstant {
    /// Relative spread between the last two refinements.
    pub fn drift(&self) -> f64 {
        match self.refinement_trend.as_slice() {
            [.., a, b] => ((b - a) / b).abs(),
            _ => 0.0,
        }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// sup and inf of kernel/envelope over an n×n (t, r) grid with t ∈ [0.1, 10]
/// and r ∈ [1e-2, 1e2], both dilated by (λ^α, λ).
pub fn envelope_ratio_range(table: &StableKernelTable, n: usize, lambda: f64) -> (f64, f64) {
    let a = table.alpha;
    let ts = log_grid(0.1, 10.0, n);
    let rs = log_grid(1e-2, 1e2, n);
    let mut sup: f64 = 0.0;
    let mut inf = f64::INFINITY;
    for &t0 in &ts {
        let t = lambda.powf(a) * t0;
        for &r0 in &rs {
            let r = lambda * r0;
            let q = table.kernel_radial(t, r) / envelope(D, a, t, r);
            sup = sup.max(q);
            inf = inf.min(q);
        }
    }
    (sup, inf)
}

/// k̂₀ = max(sup, 1/inf) of kernel/envelope; refinement 100² → 200² points.
pub fn estimate_k0(table: &StableKernelTable, lambda: f64) -> EmpiricalConstant {
    let trend: Vec<f64> = [100usize, 200]
        .iter()
        .map(|&n| {
            let (s, i) = envelope_ratio_range(table, n, lambda);
            s.max(1.0 / i)
        })
        .collect();
    EmpiricalConstant {
        name: "k0".into(),
        value: trend[1],
        stderr: 0.0,
        design: format!("t in [0.1,10] x r in [1e-2,1e2] log grid, dilation {lambda}"),
        refinement_trend: trend,
        inconclusive: false,
    }
}

/// k̂₁ = sup |∇p_t|/E^t over the same grid family.
pub fn estimate_k1(table: &StableKernelTable, lambda: f64) -> EmpiricalConstant {
    let a = table.alpha;
    let trend: Vec<f64> = [100usize, 200]
        .iter()
        .map(|&n| {
            let mut sup: f64 = 0.0;
            for &t0 in &log_grid(0.1, 10.0, n) {
                let t = lambda.powf(a) * t0;
                for &r0 in &log_grid(1e-2, 1e2, n) {
                    let r = lambda * r0;
                    let g = table.grad_kernel(t, r).unwrap_or(0.0);
                    sup = sup.max(g / e_kernel(D, a, t, r));
                }
            }
            sup
        })
        .collect();
    EmpiricalConstant {
        name: "k1".into(),
        value: trend[1],
        stderr: 0.0,
        design: format!("t in [0.1,10] x r in [1e-2,1e2] log grid, dilation {lambda}"),
        refinement_trend: trend,
        inconclusive: false,
    }
}

/// Which space-time convolution inequality to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convolution {
    /// ∫₀ᵗ⟨p_{t−τ}(x−·)E^τ(·−y)⟩dτ ≤ k₂ t^{(α−1)/α} p_t(x−y)
    KernelE,
    /// ∫₀ᵗ⟨E^{t−τ}(x−·)E^τ(·−y)⟩dτ ≤ k₃ t^{(α−1)/α} E^t(x−y)
    EE,
}

/// Monte Carlo estimate of one convolution inequality at a design point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionCheck {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs_without_constant: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
    pub inconclusive: bool,
}

/// Importance-sampled space-time quadrature. The proposal is an equal mixture
/// of (τ ∝ τ^{−1/α}, z ~ p_τ(· − y)) and (t − τ ∝ (t−τ)^{−1/α}, z ~ p_{t−τ}(· − x)),
/// under which the integrand-to-density ratio stays bounded.
pub fn convolution_inequality_check(
    table: &StableKernelTable,
    which: Convolution,
    t: f64,
    x: &[f64],
    y: &[f64],
    n_mc: usize,
    stream: RngStream,
) -> Result<ConvolutionCheck> {
    if !(t > 0.0) || x.len() != D || y.len() != D || n_mc < 100 {
        return Err(domain("convolution_inequality_check", "needs t > 0, 3-d points, n_mc >= 100"));
    }
    let a = table.alpha;
    let expo = 1.0 - 1.0 / a;
    // Normalized time density q(s) = expo · s^{−1/α} / t^{expo} on (0, t).
    let time_density = |s: f64| expo * s.powf(-1.0 / a) / t.powf(expo);
    let first = |tau: f64, w: f64| -> f64 {
        match which {
            Convolution::KernelE => table.kernel_radial(tau, w),
            Convolution::EE => e_kernel(D, a, tau, w),
        }
    };
    const BLOCKS: usize = 10;
    let per_block = n_mc.div_ceil(BLOCKS);
    let blocks: Vec<f64> = (0..BLOCKS)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(stream.seed, stream.stream_id.wrapping_mul(1 << 20) + b as u64).rng();
            let mut z = [0.0; D];
            let mut acc = 0.0;
            for _ in 0..per_block {
                let from_y = rng.random::<bool>();
                let s = t * rng.random::<f64>().powf(1.0 / expo);
                let s = s.max(1e-300);
                let (tau, centre) = if from_y { (s, y) } else { (t - s, x) };
                stable_increment_into(a, s, &mut rng, &mut z);
                for i in 0..D {
                    z[i] += centre[i];
                }
                let tau = tau.clamp(1e-300, t);
                let rx = dist(x, &z);
                let ry = dist(&z, y);
                let f = first(t - tau, rx) * e_kernel(D, a, tau, ry);
                let q1 = time_density(tau) * table.kernel_radial(tau, ry);
                let q2 = time_density(t - tau) * table.kernel_radial(t - tau, rx);
                let q = 0.5 * (q1 + q2);
                if q > 0.0 && f.is_finite() {
                    acc += f / q;
                }
            }
            acc / per_block as f64
        })
        .collect();
    let (lhs, lhs_stderr) = crate::stats::mean_stderr(&blocks);
    let rxy = dist(x, y);
    let base = match which {
        Convolution::KernelE => table.kernel_radial(t, rxy),
        Convolution::EE => e_kernel(D, a, t, rxy),
    };
    let rhs = t.powf((a - 1.0) / a) * base;
    Ok(ConvolutionCheck {
        lhs,
        lhs_stderr,
        rhs_without_constant: rhs,
        ratio: lhs / rhs,
        ratio_stderr: lhs_stderr / rhs,
        inconclusive: !(lhs > 0.0) || lhs_stderr > 0.1 * lhs,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

/// Default design for k̂₂, k̂₃: t = 1, x = 0, y on the first axis.
pub fn convolution_design() -> Vec<(f64, [f64; 3], [f64; 3])> {
    [0.0, 0.5, 1.0, 2.0, 5.0, 20.0]
        .iter()
        .map(|&r| (1.0, [0.0; 3], [r, 0.0, 0.0]))
        .collect()
}

/// k̂₂ or k̂₃ as the sup of the ratio over a design, dilated by λ.
pub fn estimate_convolution_constant(
    table: &StableKernelTable,
    which: Convolution,
    design: &[(f64, [f64; 3], [f64; 3])],
    lambda: f64,
    n_mc: &[usize],
    seed: u64,
) -> Result<EmpiricalConstant> {
    let a = table.alpha;
    let mut trend = Vec::new();
    let mut stderr = 0.0;
    let mut inconclusive = false;
    for &n in n_mc {
        let mut sup: f64 = 0.0;
        let mut se = 0.0;
        for (k, (t, x, y)) in design.iter().enumerate() {
            let xs: Vec<f64> = x.iter().map(|v| lambda * v).collect();
            let ys: Vec<f64> = y.iter().map(|v| lambda * v).collect();
            let c = convolution_inequality_check(
                table,
                which,
                lambda.powf(a) * t,
                &xs,
                &ys,
                n,
                RngStream::new(seed, k as u64),
            )?;
            inconclusive |= c.inconclusive;
            if c.ratio > sup {
                sup = c.ratio;
                se = c.ratio_stderr;
            }
        }
        trend.push(sup);
        stderr = se;
    }
    Ok(EmpiricalConstant {
        name: match which {
            Convolution::KernelE => "k2".into(),
            Convolution::EE => "k3".into(),
        },
        value: *trend.last().unwrap_or(&f64::NAN),
        stderr,
        design: format!("{} points, dilation {lambda}", design.len()),
        refinement_trend: trend,
        inconclusive,
    })
}

/// Ratio p_t(x−z)p_s(z−y) / [p_{t+s}(x−y)(p_t(x−z) + p_s(z−y))].
pub fn three_p_check(
    table: &StableKernelTable,
    t: f64,
    s: f64,
    x: &[f64],
    z: &[f64],
    y: &[f64],
) -> Result<f64> {
    if !(t > 0.0 && s > 0.0) {
        return Err(domain("three_p_check", "needs t, s > 0"));
    }
    let a = table.kernel_radial(t, dist(x, z));
    let b = table.kernel_radial(s, dist(z, y));
    let c = table.kernel_radial(t + s, dist(x, y));
    Ok(a * b / (c * (a + b)))
}

/// K̂ = sup of the three-point ratio over `n` random designs
/// (t, s log-uniform in [0.1, 10], points uniform in the ball of radius 10).
pub fn estimate_three_p(table: &StableKernelTable, n: usize, lambda: f64, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed, 0).rng();
    let a = table.alpha;
    let point = |rng: &mut rand_chacha::ChaCha8Rng| -> [f64; 3] {
        loop {
            let p = [
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            ];
            if norm(&p) <= 10.0 {
                return p.map(|v| lambda * v);
            }
        }
    };
    let mut sup: f64 = 0.0;
    for _ in 0..n {
        let t = 10f64.powf(rng.random_range(-1.0..1.0)) * lambda.powf(a);
        let s = 10f64.powf(rng.random_range(-1.0..1.0)) * lambda.powf(a);
        let (x, z, y) = (point(&mut rng), point(&mut rng), point(&mut rng));
        sup = sup.max(three_p_check(table, t, s, &x, &z, &y)?);
    }
    Ok(sup)
}

/// Normalization of the hypersingular integral matching the multiplier |ξ|^α:
/// c_{d,α} = 2^α Γ((d+α)/2) / (π^{d/2} |Γ(−α/2)|).
pub fn hypersingular_constant(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    let g_neg = gamma_unchecked(1.0 - 0.5 * alpha) / (0.5 * alpha);
    2f64.powf(alpha) * gamma_unchecked(0.5 * (df + alpha)) / (PI.powf(0.5 * df) * g_neg)
}

/// Closed form (−Δ)^{α/2}|x|^β = −β(d+β−2)γ(d+β−2)/γ(d+β−α) |x|^{β−α}.
pub fn frac_laplacian_power(d: usize, alpha: f64, beta: f64, r: f64) -> Result<f64> {
    let df = d as f64;
    let num = gamma_constant(d, df + beta - 2.0)?;
    let den = gamma_constant(d, df + beta - alpha)?;
    Ok(-beta * (df + beta - 2.0) * num / den * r.powf(beta - alpha))
}

/// (−Δ)^{α/2}f(x) for a radial profile f(|x|) in d = 3, as the principal-value
/// integral c_{3,α} p.v.∫(f(x) − f(x+h))|h|^{−3−α}dh.
///
/// The h-integral is done in polar form with the exact spherical mean
/// M(ρ) = (2aρ)^{−1}∫_{|a−ρ|}^{a+ρ} s f(s) ds, a = |x|. The ball ρ < 10^{−3}a uses
/// the second-order Taylor term −ΔF ρ²/6; beyond `cutoff` a power law fitted to
/// M supplies the tail.
pub fn frac_laplacian_radial<F: Fn(f64) -> f64 + Sync>(
    f: &F,
    alpha: f64,
    x: &[f64],
    cutoff: f64,
) -> Result<f64> {
    if x.len() != D {
        return Err(domain("frac_laplacian_radial", "only d = 3 is supported"));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(domain("frac_laplacian_radial", "alpha must lie in (0, 2)"));
    }
    let a = norm(x);
    if a == 0.0 {
        return Err(domain("frac_laplacian_radial", "needs |x| > 0"));
    }
    if !(cutoff > 4.0 * a) {
        return Err(domain("frac_laplacian_radial", "cutoff must exceed 4|x|"));
    }
    let fa = f(a);
    let mean = |rho: f64| -> f64 {
        let lo = (a - rho).abs();
        let hi = a + rho;
        let g = |s: f64| s * f(s);
        // Split at the centre so a kink of f at 0 sits on a panel end.
        let mid = 0.5 * (lo + hi);
        let v = if lo < 1e-3 * hi {
            let mut acc = 0.0;
            let mut right = hi;
            let mut left = 0.5 * hi;
            while left > lo.max(1e-14 * hi) {
                acc += quad::gauss(32, left, right, g);
                right = left;
                left *= 0.5;
            }
            acc + quad::gauss(32, lo, right, g)
        } else {
            quad::gauss(32, lo, mid, g) + quad::gauss(32, mid, hi, g)
        };
        v / (2.0 * a * rho)
    };
    // Laplacian of the radial profile by central differences, F'' + (2/a)F'.
    let h = 1e-3 * a;
    let (fp, fm) = (f(a + h), f(a - h));
    let lap = (fp - 2.0 * fa + fm) / (h * h) + (fp - fm) / (h * a);
    let delta = 1e-3 * a;
    let inner = -lap / 6.0 * delta.powf(2.0 - alpha) / (2.0 - alpha);
    // ∫_δ^R (F(a) − M(ρ)) ρ^{−1−α} dρ in u = ln ρ, with breaks at a and 2a.
    let breaks = [delta.ln(), a.ln(), (2.0 * a).ln(), cutoff.ln()];
    let integrand = |u: f64| {
        let rho = u.exp();
        (fa - mean(rho)) * rho.powf(-alpha)
    };
    let mut body = 0.0;
    for w in breaks.windows(2) {
        let panels = 24usize;
        let step = (w[1] - w[0]) / panels as f64;
        body += (0..panels)
            .into_par_iter()
            .map(|k| {
                let lo = w[0] + k as f64 * step;
                quad::gauss(24, lo, lo + step, integrand)
            })
            .sum::<f64>();
    }
    // Tail: M(ρ) ≈ A ρ^p fitted at R/2 and R.
    let (m1, m2) = (mean(0.5 * cutoff), mean(cutoff));
    let mut tail = fa * cutoff.powf(-alpha) / alpha;
    if m1.abs() > 0.0 && m2.abs() > 0.0 && m1.signum() == m2.signum() {
        let p = (m2 / m1).ln() / 2f64.ln();
        if !(p < alpha) {
            return Err(domain("frac_laplacian_radial", "profile grows too fast for the tail"));
        }
        tail -= m2 * cutoff.powf(-alpha) / (alpha - p);
    } else {
        tail -= m2 * cutoff.powf(-alpha) / alpha;
    }
    Ok(4.0 * PI * hypersingular_constant(D, alpha) * (inner + body + tail))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn origin_values() {
        let g = (4.0 * PI).powf(-1.5);
        assert!(rel(p1_radial(0.0, 2.0).unwrap(), g) < 1e-14);
        for alpha in [1.1, 1.5, 1.9] {
            // Series at tiny r against the Gamma closed form at 0.
            let p = p1_radial(1e-6, alpha).unwrap();
            assert!(rel(p, p1_at_origin(alpha)) < 1e-9);
        }
        assert!(p1_radial(-1.0, 1.5).is_err());
        assert!(p1_radial(1.0, 2.5).is_err());
    }

    #[test]
    fn regimes_agree_at_switch_points() {
        for alpha in [1.2, 1.5, 1.8] {
            for r in [SERIES_RADIUS, ASYMPTOTIC_RADIUS] {
                let (q, dq) = fourier_transforms(r, alpha);
                let quad_p = q / (2.0 * PI * PI * r);
                let quad_dp = (dq / r - q / (r * r)) / (2.0 * PI * PI);
                let (p, dp) = if r == SERIES_RADIUS { series(r, alpha) } else { asymptotic(r, alpha) };
                assert!(rel(p, quad_p) < 1e-9, "alpha {alpha} r {r}: {p} vs {quad_p}");
                assert!(rel(dp, quad_dp) < 1e-8, "alpha {alpha} r {r}: {dp} vs {quad_dp}");
            }
        }
    }

    #[test]
    fn cauchy_oracle() {
        for r in [0.1f64, 1.0, 10.0, 3.3, 70.0] {
            let exact = 1.0 / (PI * PI * (1.0 + r * r).powi(2));
            assert!(rel(p1_radial(r, 1.0).unwrap(), exact) < 1e-8, "r = {r}");
        }
    }

    #[test]
    fn gaussian_gradient() {
        for r in [0.3f64, 1.0, 2.5, 5.0] {
            let p = (4.0 * PI).powf(-1.5) * (-r * r / 4.0).exp();
            let dp = p1_radial_derivative(r, 2.0).unwrap();
            assert!(rel(dp, -0.5 * r * p) < 1e-8, "r = {r}");
        }
    }

    #[test]
    fn envelope_identities() {
        let t: f64 = 0.7;
        let r = t.powf(1.0 / 1.5);
        assert!(rel(envelope(3, 1.5, t, r), t.powf(-2.0)) < 1e-12);
        assert_eq!(e_kernel(3, 1.5, 1.0, 0.0), 1.0);
        for r in [1.0, 2.0, 10.0] {
            assert!(e_kernel(3, 1.5, 1.0, r) <= envelope(3, 1.5, 1.0, r) / r * (1.0 + 1e-15));
        }
    }

    #[test]
    fn three_point_ratio_at_coincidence() {
        let table = StableKernelTable::build_with(1.5, 256, 1e-3, 1e3).unwrap();
        let o = [0.0; 3];
        let v = three_p_check(&table, 1.0, 1.0, &o, &o, &o).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn hypersingular_constant_known_value() {
        // α = 1, d = 3: c = 2Γ(2)/(π^{3/2}·2√π) = 1/π².
        assert!(rel(hypersingular_constant(3, 1.0), 1.0 / (PI * PI)) < 1e-13);
    }
}
