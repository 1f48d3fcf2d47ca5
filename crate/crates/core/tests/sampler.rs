use stablehk::sampler::*;
use stablehk::stable_kernel::StableKernelTable;
use stablehk::stats::{chi_square, ks_two_sample, mean_stderr};

const N: usize = 1_000_000;

#[test]
fn laplace_transform_of_one_sided_law() {
    let mut rng = RngStream::new(42, 1).rng();
    let s = sample_one_sided_stable(0.75, N, &mut rng).unwrap();
    assert!(s.iter().all(|v| *v > 0.0));
    for lambda in [0.5f64, 1.0, 2.0] {
        let vals: Vec<f64> = s.iter().map(|x| (-lambda * x).exp()).collect();
        let (m, se) = mean_stderr(&vals);
        let exact = (-lambda.powf(0.75)).exp();
        assert!((m - exact).abs() < 4.0 * se, "lambda {lambda}: {m} vs {exact} ± {se}");
    }
}

#[test]
fn one_sided_tail_law() {
    let mut rng = RngStream::new(43, 1).rng();
    let s = sample_one_sided_stable(0.75, N, &mut rng).unwrap();
    // P(S > s)·s^a → 1/Γ(1 − a)
    let c = 1.0 / stablehk::specfun::gamma_fn(0.25).unwrap();
    // Corrections decay like s^{−a}, so the gap must shrink toward the limit.
    let mut gaps = Vec::new();
    for level in [10.0f64, 100.0, 1000.0] {
        let p = s.iter().filter(|v| **v > level).count() as f64 / N as f64;
        let se = (p / N as f64).sqrt() * level.powf(0.75);
        let v = p * level.powf(0.75);
        gaps.push(((v - c).abs(), se));
    }
    assert!(gaps[2].0 < 4.0 * gaps[2].1 + 0.03 * c, "{gaps:?}");
    assert!(gaps[1].0 < gaps[0].0, "{gaps:?}");
}

fn increments(seed: u64, alpha: f64, dt: f64, n: usize) -> Vec<[f64; 3]> {
    let mut rng = RngStream::new(seed, 0).rng();
    (0..n)
        .map(|_| {
            let mut z = [0.0; 3];
            stable_increment_into(alpha, dt, &mut rng, &mut z);
            z
        })
        .collect()
}

#[test]
fn characteristic_function_and_isotropy() {
    let zs = increments(7, 1.5, 1.0, N);
    let freqs: [[f64; 3]; 5] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.3, -0.4, 0.0],
        [1.0, 1.0, 1.0],
    ];
    for xi in freqs {
        let vals: Vec<f64> = zs.iter().map(|z| (xi[0] * z[0] + xi[1] * z[1] + xi[2] * z[2]).cos()).collect();
        let (m, se) = mean_stderr(&vals);
        let k: f64 = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
        let exact = (-k.powf(1.5)).exp();
        assert!((m - exact).abs() < 4.0 * se, "xi {xi:?}: {m} vs {exact} ± {se}");
    }
    let ones: Vec<f64> = zs.iter().map(|_| 1.0).collect();
    assert_eq!(mean_stderr(&ones).0, 1.0);
}

#[test]
fn self_similarity() {
    let lam: f64 = 2.0;
    let a: Vec<f64> = increments(9, 1.5, 1.0, 200_000).iter().map(|z| lam * norm(z)).collect();
    let b: Vec<f64> = increments(10, 1.5, lam.powf(1.5), 200_000).iter().map(norm).collect();
    let (_, p) = ks_two_sample(&a, &b);
    assert!(p > 0.01, "p = {p}");
}

fn norm(z: &[f64; 3]) -> f64 {
    (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt()
}

#[test]
fn radial_histogram_matches_kernel() {
    let table = StableKernelTable::cached(1.5).unwrap();
    let radii: Vec<f64> = increments(11, 1.5, 1.0, N).iter().map(norm).collect();
    let bins = 50;
    // Equal-probability bin edges from the tabulated radial CDF.
    let mut edges = vec![0.0];
    for k in 1..bins {
        let target = k as f64 / bins as f64;
        let (mut lo, mut hi) = (0.0, 1e4);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if table.radial_cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        edges.push(0.5 * (lo + hi));
    }
    edges.push(f64::INFINITY);
    let mut counts = vec![0.0; bins];
    for r in &radii {
        let k = edges.partition_point(|e| e <= r) - 1;
        counts[k.min(bins - 1)] += 1.0;
    }
    let expected: Vec<f64> = (0..bins)
        .map(|k| {
            let hi = if k + 1 == bins { 1.0 } else { table.radial_cdf(edges[k + 1]) };
            (hi - table.radial_cdf(edges[k])) * N as f64
        })
        .collect();
    let (_, p) = chi_square(&counts, &expected);
    assert!(p > 0.001, "chi-square p = {p}");
}
