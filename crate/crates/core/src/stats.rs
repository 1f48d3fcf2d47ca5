//! Small statistical helpers for the Monte Carlo checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Asymptotic Kolmogorov distribution tail P(K > λ).
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

fn ks_pvalue(stat: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_tail((sq + 0.12 + 0.11 / sq) * stat)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF: (D, p-value).
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (d, ks_pvalue(d, n))
}

/// Two-sample Kolmogorov–Smirnov test: (D, p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, ks_pvalue(d, na * nb / (na + nb)))
}

/// Pearson chi-square goodness of fit: (statistic, p-value). Bins with zero
/// expected count are skipped.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (o, e) in observed.iter().zip(expected) {
        if *e > 0.0 {
            stat += (o - e).powi(2) / e;
            bins += 1;
        }
    }
    let dof = bins.saturating_sub(1).max(1) as f64;
    let p = ChiSquared::new(dof).map(|c| 1.0 - c.cdf(stat)).unwrap_or(f64::NAN);
    (stat, p)
}

/// Wasserstein-1 distance between two empirical laws on the line.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    if xa.len() == xb.len() {
        return xa.iter().zip(&xb).map(|(x, y)| (x - y).abs()).sum::<f64>() / xa.len() as f64;
    }
    // Integrate |F_a − F_b| over the merged support.
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let mut merged: Vec<f64> = xa.iter().chain(&xb).copied().collect();
    merged.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let mut acc = 0.0;
    for w in merged.windows(2) {
        while i < xa.len() && xa[i] <= w[0] {
            i += 1;
        }
        while j < xb.len() && xb[j] <= w[0] {
            j += 1;
        }
        acc += (i as f64 / na - j as f64 / nb).abs() * (w[1] - w[0]);
    }
    acc
}

/// Median of a sample (average of the two central order statistics).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_uniform() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d < 1e-3 + 1e-12);
        assert!(p > 0.99);
        let (d2, p2) = ks_one_sample(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(d2 > 0.2 && p2 < 1e-6);
    }

    #[test]
    fn two_sample_and_wasserstein() {
        let a: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..500).map(|i| i as f64 + 10.0).collect();
        assert!((wasserstein1(&a, &b) - 10.0).abs() < 1e-12);
        let c: Vec<f64> = (0..250).map(|i| 2.0 * i as f64 + 10.0).collect();
        assert!((wasserstein1(&a, &c) - 10.0).abs() < 1.5);
        let (d, _) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn chi_square_exact_fit() {
        let (s, p) = chi_square(&[10.0, 20.0, 30.0], &[10.0, 20.0, 30.0]);
        assert_eq!(s, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_and_median() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
