//! Isotropic α-stable increments in R^d via subordinated Gaussians.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{domain, Result};

/// A reproducible random stream: the same (seed, stream_id) always yields the
/// same sequence, and distinct stream ids are independent ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// One draw of the positive stable law with E e^{−λS} = e^{−λ^a} (Kanter's
/// representation); `a` must lie in (0, 1).
pub fn one_sided_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = PI * rng.random::<f64>();
    let w: f64 = Exp1.sample(rng);
    let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
    let left = (a * u).sin() / u.sin().powf(1.0 / a);
    let right = (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
    left * right
}

pub fn sample_one_sided_stable<R: Rng + ?Sized>(a: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(a > 0.0 && a < 1.0) {
        return Err(domain(
            "sample_one_sided_stable",
            format!("index must lie in (0, 1), got {a}"),
        ));
    }
    Ok((0..n).map(|_| one_sided_stable(a, rng)).collect())
}

/// Writes Z = sqrt(2S)·G into `out`, with S = dt^{2/α}S₁ and G standard normal,
/// so that E e^{iξ·Z} = e^{−dt|ξ|^α}. No argument checks.
#[inline]
pub fn stable_increment_into<R: Rng + ?Sized>(alpha: f64, dt: f64, rng: &mut R, out: &mut [f64]) {
    let s = if alpha == 2.0 {
        dt
    } else {
        dt.powf(2.0 / alpha) * one_sided_stable(0.5 * alpha, rng)
    };
    let scale = (2.0 * s).sqrt();
    for v in out.iter_mut() {
        let g: f64 = StandardNormal.sample(rng);
        *v = scale * g;
    }
}

pub fn sample_stable_increment<R: Rng + ?Sized>(
    d: usize,
    alpha: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(domain("sample_stable_increment", "d must be positive"));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(domain(
            "sample_stable_increment",
            format!("alpha must lie in (0, 2], got {alpha}"),
        ));
    }
    if !(dt > 0.0) {
        return Err(domain("sample_stable_increment", format!("needs dt > 0, got {dt}")));
    }
    let mut out = vec![0.0; d];
    stable_increment_into(alpha, dt, rng, &mut out);
    Ok(out)
}
