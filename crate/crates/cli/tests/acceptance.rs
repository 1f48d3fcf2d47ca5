//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use rand::Rng;
use stablehk::appendix_props::{extrapolation_constant, kappa, lemma_suite, Exponent, ExtrapolationInput};
use stablehk::model::{kappa_of_beta, solve_beta, ModelParams};
use stablehk::sampler::{stable_increment_into, RngStream};
use stablehk::simulator::mc::{bandwidth, euler_paths, kde_field};
use stablehk::simulator::pde::{
    contraction_and_ultracontractivity_check, free_gaussian_oracle, gaussian_bump, propagate_with, relative_l1,
    PropagateOptions,
};
use stablehk::simulator::{Direction, SimConfig};
use stablehk::stable_kernel::{
    estimate_k0, frac_laplacian_power, frac_laplacian_radial, p1_radial, StableKernelTable,
};
use stablehk::stats::{chi_square, mean_stderr};
use stablehk::verifier::{
    verify_desingularizing_l1, BoundReport, Design, RadialSettings, Suite, Theorem, Verdict, DESING_RADII,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn desk_params() -> ModelParams {
    ModelParams::new(3, 1.5, 5.0, 1e-4).unwrap()
}

// mpmath, 30 digits: bisection on the β equation and the Fourier–Bessel
// integral of e^{−ρ^{3/2}}.
const BETA_ORACLE: [(f64, f64); 5] = [
    (1e-3, 0.001_196_613_484_179_786_4),
    (1.0, 0.875_603_684_341_571_075_8),
    (5.0, 1.388_362_742_339_105_966_2),
    (10.0, 1.447_099_007_160_219_104_7),
    (1e3, 1.499_501_017_815_232_566_7),
];
const P1_ORACLE: [(f64, f64); 5] = [
    (0.0, 0.033_773_727_880_779_257),
    (0.5, 0.030_110_888_779_505_641),
    (1.0, 0.021_583_066_054_200_037),
    (2.0, 0.006_703_184_098_248_627),
    (5.0, 0.000_131_080_766_141_851_69),
];

fn exponent_curve() -> Outcome {
    let n = 61;
    let ks: Vec<f64> = (0..n).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64)).collect();
    let betas: Vec<f64> = ks.iter().map(|k| solve_beta(*k, 3, 1.5).unwrap()).collect();
    let increasing = betas.windows(2).all(|w| w[1] > w[0]);
    let inside = betas.iter().all(|b| *b > 0.0 && *b < 1.5);
    let top = *betas.last().unwrap();
    let roundtrip = ks
        .iter()
        .zip(&betas)
        .map(|(k, b)| rel(kappa_of_beta(*b, 3, 1.5).unwrap(), *k))
        .fold(0.0, f64::max);
    let oracle = BETA_ORACLE
        .iter()
        .map(|(k, b)| (solve_beta(*k, 3, 1.5).unwrap() - b).abs())
        .fold(0.0, f64::max);
    outcome(
        increasing && inside && top > 1.45 && roundtrip <= 1e-8 && oracle < 1e-10,
        format!("beta(1e3)={top:.6} roundtrip={roundtrip:.1e} oracle_err={oracle:.1e}"),
    )
}

fn weight_exactness() -> Outcome {
    let p = desk_params();
    let w = p.weights();
    let b = p.beta;
    let e1 = (w.eta(1.0).unwrap() - 1.0).abs();
    let e2 = (w.eta(2.0).unwrap() - (1.0 + 0.5 * b)).abs();
    // Fourth-order one-sided differences on both sides of each breakpoint.
    let h = 1e-3;
    let eta = |t: f64| w.eta(t).unwrap();
    let right = |t0: f64| {
        (-25.0 * eta(t0) + 48.0 * eta(t0 + h) - 36.0 * eta(t0 + 2.0 * h) + 16.0 * eta(t0 + 3.0 * h)
            - 3.0 * eta(t0 + 4.0 * h))
            / (12.0 * h)
    };
    let left = |t0: f64| {
        (25.0 * eta(t0) - 48.0 * eta(t0 - h) + 36.0 * eta(t0 - 2.0 * h) - 16.0 * eta(t0 - 3.0 * h)
            + 3.0 * eta(t0 - 4.0 * h))
            / (12.0 * h)
    };
    let d1 = (left(1.0) - right(1.0)).abs().max((right(1.0) - b).abs());
    let d2 = (left(2.0) - right(2.0)).abs().max(right(2.0).abs());
    let mut rng = RngStream::new(2, 0).rng();
    let mut violations = 0;
    for _ in 0..1000 {
        // s ≥ t: ψ decreases in time, by at most the factor (t/s)^{β/α}.
        let t = 10f64.powf(rng.random_range(-2.0..2.0));
        let s = t * 10f64.powf(rng.random_range(0.0..2.0));
        let r = 10f64.powf(rng.random_range(-3.0..2.0));
        let (ps, pt) = (w.psi_radial(s, r), w.psi_radial(t, r));
        let lower = (t / s).powf(b / p.alpha) * pt;
        let slack = 1e-12 * pt;
        if !(lower <= ps + slack && ps <= pt + slack) {
            violations += 1;
        }
    }
    outcome(
        e1 < 1e-15 && e2 < 1e-15 && d1 < 1e-10 && d2 < 1e-10 && violations == 0,
        format!("eta errors {e1:.1e}/{e2:.1e} derivative gaps {d1:.1e}/{d2:.1e} violations={violations}"),
    )
}

fn stable_kernel() -> Outcome {
    let table = StableKernelTable::cached(1.5).unwrap();
    let mass = (table.normalization() - 1.0).abs();
    let mut closed: f64 = 0.0;
    for i in 0..20 {
        let r = 10f64.powf(-1.3 + 2.0 * i as f64 / 19.0);
        let cauchy = 1.0 / (PI * PI * (1.0 + r * r).powi(2));
        closed = closed.max(rel(p1_radial(r, 1.0).unwrap(), cauchy));
        let rg = 0.05 + 5.95 * i as f64 / 19.0;
        let gauss = (4.0 * PI).powf(-1.5) * (-rg * rg / 4.0).exp();
        closed = closed.max(rel(p1_radial(rg, 2.0).unwrap(), gauss));
    }
    let oracle = P1_ORACLE.iter().map(|(r, v)| rel(table.p1(*r), *v)).fold(0.0, f64::max);
    let (x, y) = ([0.3, -0.2, 1.1], [-0.5, 0.4, 0.2]);
    let mut scaling: f64 = 0.0;
    for lam in [0.5f64, 3.0, 10.0] {
        let a = table.kernel(0.8, &x, &y).unwrap();
        let b = table
            .kernel(lam.powf(1.5) * 0.8, &x.map(|v| lam * v), &y.map(|v| lam * v))
            .unwrap();
        scaling = scaling.max(rel(b, a / lam.powi(3)));
    }
    let k0 = estimate_k0(&table, 1.0);
    let k0_dilated = estimate_k0(&table, 4.0);
    let k0_drift = rel(k0_dilated.value, k0.value);
    outcome(
        mass <= 1e-6 && closed <= 1e-8 && oracle < 1e-6 && scaling <= 1e-10 && k0.value.is_finite() && k0_drift <= 0.01,
        format!(
            "mass_err={mass:.1e} closed_form={closed:.1e} alpha1.5_oracle={oracle:.1e} scaling={scaling:.1e} k0={:.4} drift={k0_drift:.1e}",
            k0.value
        ),
    )
}

fn lyapunov_balance() -> Outcome {
    let mut worst: f64 = 0.0;
    for kappa in [1.0, 10.0] {
        let beta = solve_beta(kappa, 3, 1.5).unwrap();
        let f = |s: f64| s.powf(beta);
        for r in [0.5, 1.0, 2.0] {
            let lap = frac_laplacian_radial(&f, 1.5, &[r, 0.0, 0.0], 1e4 * r).unwrap();
            let drift_term = kappa * (3.0 + beta - 1.5) * r.powf(beta - 1.5);
            worst = worst.max((lap + drift_term).abs() / drift_term);
            // Closed form for the same quantity, as a cross-check of the quadrature.
            let exact = frac_laplacian_power(3, 1.5, beta, r).unwrap();
            worst = worst.max((exact + drift_term).abs() / drift_term);
        }
    }
    outcome(worst <= 1e-3, format!("max relative residual {worst:.1e}"))
}

fn sampler() -> Outcome {
    let n = 1_000_000;
    let mut rng = RngStream::new(7, 0).rng();
    let zs: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            let mut z = [0.0; 3];
            stable_increment_into(1.5, 1.0, &mut rng, &mut z);
            z
        })
        .collect();
    let freqs: [[f64; 3]; 5] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.3, -0.4, 0.0],
        [1.0, 1.0, 1.0],
    ];
    let mut worst_z: f64 = 0.0;
    for xi in freqs {
        let vals: Vec<f64> = zs.iter().map(|z| (xi[0] * z[0] + xi[1] * z[1] + xi[2] * z[2]).cos()).collect();
        let (m, se) = mean_stderr(&vals);
        let k = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
        worst_z = worst_z.max((m - (-k.powf(1.5)).exp()).abs() / se);
    }
    let table = StableKernelTable::cached(1.5).unwrap();
    let bins = 50;
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
    for z in &zs {
        let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        let k = edges.partition_point(|e| *e <= r) - 1;
        counts[k.min(bins - 1)] += 1.0;
    }
    let expected: Vec<f64> = (0..bins)
        .map(|k| {
            let hi = if k + 1 == bins { 1.0 } else { table.radial_cdf(edges[k + 1]) };
            (hi - table.radial_cdf(edges[k])) * n as f64
        })
        .collect();
    let (_, p) = chi_square(&counts, &expected);
    outcome(worst_z < 4.0 && p > 1e-3, format!("max ECF z={worst_z:.2} chi-square p={p:.3}"))
}

/// E[KDE](y) for the free kernel: the radial density smoothed by the isotropic
/// Gaussian of width h, at distance s from the start.
fn smoothed_free_kernel(table: &StableKernelTable, t: f64, s: f64, h: f64) -> f64 {
    let lo = (s - 10.0 * h).max(0.0);
    let hi = s + 10.0 * h;
    let m = 4000;
    let dr = (hi - lo) / m as f64;
    let norm = (2.0 * PI * h * h).powf(-1.5);
    let f = |r: f64| {
        let a = 2.0 * r * s / (h * h);
        let shell = if a < 1e-12 { 1.0 } else { -(-a).exp_m1() / a };
        4.0 * PI * r * r * norm * (-(r - s).powi(2) / (2.0 * h * h)).exp() * shell * table.kernel_radial(t, r)
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..m {
        acc += f(lo + i as f64 * dr) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * dr / 3.0
}

fn free_oracle() -> Outcome {
    let table = StableKernelTable::cached(1.5).unwrap();
    let p = ModelParams::free(3, 1.5, 1e-4).unwrap();
    let mut config = SimConfig::new(p, 1.0, 200_000, 11);
    config.blocks = 50;
    let dirs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut worst_z: f64 = 0.0;
    let mut count = 0;
    for x0 in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]] {
        let ys: Vec<Vec<f64>> = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, r)| (0..3).map(|k| x0[k] + r * dirs[i % 3][k]).collect())
            .collect();
        let ends = euler_paths(&x0, &config).unwrap();
        let field = kde_field(&ends, &ys, &config).unwrap();
        for pt in &field.points {
            let h = bandwidth(&config, &x0, &pt.y, ends.len());
            let s = (0..3).map(|k| (pt.y[k] - x0[k]).powi(2)).sum::<f64>().sqrt();
            let expect = smoothed_free_kernel(&table, 1.0, s, h);
            worst_z = worst_z.max((pt.estimate - expect).abs() / pt.stderr);
            count += 1;
        }
    }
    let c = SimConfig::new(p.with_eps(1e-2), 1.0, 10_000, 1);
    let f0 = gaussian_bump(c.grid, [0.0; 3], 1.0);
    let run = propagate_with(&f0, Direction::FokkerPlanck, &c, &PropagateOptions::default()).unwrap();
    let oracle = free_gaussian_oracle(c.grid, 1.5, 1.0, 1.0).unwrap();
    let l1 = relative_l1(&run.field, &oracle);
    outcome(
        worst_z <= 3.0 && l1 <= 1e-3,
        format!("MC max |z|={worst_z:.2} over {count} points, grid relative L1={l1:.1e}"),
    )
}

fn conservation() -> Outcome {
    let c = SimConfig::new(ModelParams::new(3, 1.5, 5.0, 1e-2).unwrap(), 0.5, 10_000, 1);
    let f0 = gaussian_bump(c.grid, [0.5, 0.0, 0.0], 0.7);
    let run = propagate_with(&f0, Direction::FokkerPlanck, &c, &PropagateOptions::default()).unwrap();
    let m0 = run.mass_history[0];
    let drift = run.mass_history.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max) / m0 / c.t_final;
    let floor = run.min_history.iter().cloned().fold(f64::INFINITY, f64::min) / f0.max_abs();
    let rep = contraction_and_ultracontractivity_check(&c, &[([0.3, 0.0, 0.0], 0.6)]).unwrap();
    outcome(
        drift <= 1e-6 && floor >= -1e-10 && rep.passed,
        format!(
            "mass drift/unit time={drift:.1e} min/max={floor:.1e} forward sup ratio={:.6}",
            rep.max_ratio_linf
        ),
    )
}

fn find<'a>(reports: &'a [BoundReport], th: Theorem, part: &str) -> &'a BoundReport {
    reports
        .iter()
        .find(|r| r.theorem == th && r.part == part)
        .unwrap_or_else(|| panic!("no {} {part} report", th.id()))
}

fn desk_reports() -> Vec<BoundReport> {
    let config = SimConfig::new(desk_params(), 1.0, 1_000_000, 20_240_601);
    let suite = Suite::new(config, Design::default());
    suite.run(&[Theorem::StandardUpper, Theorem::TwoSided]).unwrap().reports
}

fn two_sided(reports: &[BoundReport]) -> Outcome {
    let up = find(reports, Theorem::TwoSided, "upper");
    let lo = find(reports, Theorem::TwoSided, "lower");
    let slope = find(reports, Theorem::TwoSided, "slope");
    let pass = [up, lo, slope].iter().all(|r| r.verdict == Verdict::Pass);
    outcome(
        pass,
        format!(
            "sup={:.3} (drift {:.3}) inf={:.4} (drift {:.3}) slope={:.3} vs beta {:.3}",
            up.value, up.drift, lo.value, lo.drift, slope.value, slope.details["beta"]
        ),
    )
}

fn far_field(reports: &[BoundReport]) -> Outcome {
    let r = find(reports, Theorem::StandardUpper, "ii");
    let sups: Vec<String> = [2, 5, 10, 20]
        .iter()
        .map(|d| format!("D{d}={:.3}", r.details.get(&format!("sup_D{d:02}")).copied().unwrap_or(f64::NAN)))
        .collect();
    outcome(r.verdict == Verdict::Pass, format!("{} (limit 1.25)", sups.join(" ")))
}

fn desingularizing() -> Outcome {
    let reps = verify_desingularizing_l1(&desk_params(), 1.0, &DESING_RADII, &RadialSettings::default()).unwrap();
    let pass = reps.iter().all(|r| r.verdict == Verdict::Pass);
    let summary: Vec<String> = reps
        .iter()
        .map(|r| format!("{}={:.4} (drift {:.3})", r.part, r.value, r.drift))
        .collect();
    outcome(pass, summary.join(" "))
}

fn appendix() -> Outcome {
    let suite = lemma_suite(100_000, 1);
    let v = suite.total_violations();
    let k2 = (kappa(2.0).unwrap() - 1.0).abs();
    let m = extrapolation_constant(&ExtrapolationInput {
        p: 1.0,
        q: 2.0,
        r: Exponent::Finite(4.0),
        nu: 1.0,
        m1: 1.0,
        m2: 1.0,
    })
    .unwrap()
    .m;
    outcome(v == 0 && k2 <= 1e-12 && m == 512.0, format!("violations={v} |kappa(2)-1|={k2:.1e} M={m}"))
}

fn run_cli(dir: &Path, threads: &str, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_stablehk"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env("STABLEHK_THREADS", threads)
        .stdout(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json");
    let config = config.to_str().unwrap();
    let runs: [(&str, Vec<&str>); 2] = [
        ("simulate", vec!["simulate", "--config", config]),
        ("props", vec!["props", "--draws", "20000"]),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (name, args) in &runs {
        let a = root.path().join(format!("{name}-1"));
        let b = root.path().join(format!("{name}-2"));
        let ok = run_cli(&a, "1", args) && run_cli(&b, "2", args);
        let (ta, tb) = (tree(&a), tree(&b));
        let same = ok && !ta.is_empty() && ta == tb;
        pass &= same;
        details.push(format!("{name}: {} files {}", ta.len(), if same { "identical" } else { "differ" }));
    }
    outcome(pass, details.join(", "))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut record = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        let secs = t0.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {:<4} {name}: {} [{secs:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };
    record(1, "exponent curve", &exponent_curve);
    record(2, "weight exactness", &weight_exactness);
    record(3, "stable kernel", &stable_kernel);
    record(4, "lyapunov balance", &lyapunov_balance);
    record(5, "sampler", &sampler);
    record(6, "free-kernel oracle", &free_oracle);
    record(7, "conservation and contraction", &conservation);
    let t0 = Instant::now();
    let desk = desk_reports();
    println!("desk-scale field (10^6 paths per start) built in {:.0}s", t0.elapsed().as_secs_f64());
    record(8, "two-sided weighted bound", &|| two_sided(&desk));
    record(9, "far-field bound", &|| far_field(&desk));
    record(10, "desingularizing L1", &desingularizing);
    record(11, "appendix suite", &appendix);
    record(12, "reproducibility", &reproducibility);
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
