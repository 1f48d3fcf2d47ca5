//! `stablehk`: experiment runner and report emitter.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use stablehk::appendix_props::{
    b22_b23_verifier, extrapolation_constant, kappa, lemma_suite, nash_constants, Exponent, ExtrapolationInput,
};
use stablehk::model::{kappa_of_beta, solve_beta, ModelParams};
use stablehk::simulator::mc::eps_refinement_study;
use stablehk::simulator::pde::{box_for_margin, mollified_delta, propagate_with, PropagateOptions};
use stablehk::simulator::{Backend, Direction, KernelField, KernelPoint};
use stablehk::stable_kernel::{estimate_k0, StableKernelTable};
use stablehk::verifier::{format_reports, mc_field_pair, scaling_reports, start_seed, BoundReport, Theorem, Verdict};
use stablehk::Error;

use config::{BackendChoice, ExperimentConfig};
use output::OutputDir;

const EXIT_USAGE: u8 = 64;
const EXIT_SOFTWARE: u8 = 70;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "stablehk", version, about = "Heat kernel laboratory for the fractional Laplacian with a Hardy drift")]
struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, env = "STABLEHK_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// The exponent curve kappa -> beta as CSV.
    Beta(BetaArgs),
    /// Tabulate the free stable kernel and estimate the envelope constant k0.
    Kernel(KernelArgs),
    /// Estimate the kernel over the configured design.
    Simulate(SimulateArgs),
    /// Run the bound checks and emit one report per theorem id.
    Verify(VerifyArgs),
    /// Run the appendix property suite.
    Props(PropsArgs),
}

#[derive(Args)]
struct BetaArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// `lo:hi:n` (log-spaced) or a comma list of kappa values.
    #[arg(long, default_value = "1e-3:1e3:61", value_parser = parse_kappa_grid)]
    kappa_grid: KappaGrid,
    #[arg(long, default_value = "stablehk-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    alpha: f64,
    /// CSV destination for the table (default: <out-dir>/kernel_table.csv).
    #[arg(long)]
    table_out: Option<PathBuf>,
    #[arg(long, default_value = "stablehk-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` of the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated theorem ids; all when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_theorem)]
    theorems: Vec<Theorem>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PropsArgs {
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 5.0)]
    kappa: f64,
    #[arg(long, default_value = "stablehk-out")]
    out_dir: PathBuf,
}

#[derive(Clone, Debug)]
struct KappaGrid(Vec<f64>, String);

fn parse_kappa_grid(s: &str) -> Result<KappaGrid, String> {
    let num = |v: &str| -> Result<f64, String> {
        let x: f64 = v.trim().parse().map_err(|e| format!("bad number {v:?}: {e}"))?;
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(format!("kappa must be positive and finite, got {v}"))
        }
    };
    let parts: Vec<&str> = s.split(':').collect();
    let mut out = match parts.as_slice() {
        [lo, hi, n] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let n: usize = n.trim().parse().map_err(|e| format!("bad count {n:?}: {e}"))?;
            if !(hi > lo) || n < 2 {
                return Err("range needs lo < hi and at least two points".into());
            }
            (0..n)
                .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
                .collect::<Vec<f64>>()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<f64>, String>>()?,
        _ => return Err("expected lo:hi:n or a comma list".into()),
    };
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(KappaGrid(out, s.to_string()))
}

fn parse_theorem(s: &str) -> Result<Theorem, String> {
    Theorem::parse(s).map_err(|_| {
        let ids: Vec<&str> = Theorem::ALL.iter().map(|t| t.id()).collect();
        format!("unknown theorem id {s:?}; expected one of {}", ids.join(", "))
    })
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain { .. } => EXIT_USAGE,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_SOFTWARE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: thread count must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global thread pool is built once");
    }
    let result = match cli.command {
        Command::Beta(a) => run_beta(a),
        Command::Kernel(a) => run_kernel(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Verify(a) => run_verify(a),
        Command::Props(a) => run_props(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> stablehk::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn json_bytes<T: Serialize>(v: &T) -> stablehk::Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn run_beta(a: BetaArgs) -> stablehk::Result<u8> {
    let mut rows = Vec::new();
    let mut betas = Vec::new();
    let mut worst_rt: f64 = 0.0;
    for &k in &a.kappa_grid.0 {
        let b = solve_beta(k, a.d, a.alpha)?;
        let back = kappa_of_beta(b, a.d, a.alpha)?;
        let rel = (back - k).abs() / k;
        worst_rt = worst_rt.max(rel);
        betas.push(b);
        rows.push(vec![k.to_string(), b.to_string(), back.to_string(), format!("{rel:e}")]);
    }
    let bytes = csv_bytes(&["kappa", "beta", "kappa_roundtrip", "roundtrip_rel_error"], &rows)?;
    let mut out = OutputDir::new(&a.out_dir);
    out.write("beta.csv", &bytes)?;
    let args = BTreeMap::from([
        ("d".to_string(), a.d.to_string()),
        ("alpha".to_string(), a.alpha.to_string()),
        ("kappa_grid".to_string(), a.kappa_grid.1.clone()),
    ]);
    out.finish("beta", &args, None, None)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    let increasing = betas.windows(2).all(|w| w[1] > w[0]);
    if !increasing {
        eprintln!("beta is not strictly increasing in kappa");
        return Ok(1);
    }
    if worst_rt > 1e-8 {
        eprintln!("round trip error {worst_rt:e} exceeds 1e-8");
        return Ok(1);
    }
    Ok(0)
}

fn run_kernel(a: KernelArgs) -> stablehk::Result<u8> {
    let table = StableKernelTable::build(a.alpha)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let mut out = OutputDir::new(&a.out_dir);
    match &a.table_out {
        Some(p) => out.write_at(p, &p.display().to_string(), &csv)?,
        None => out.write("kernel_table.csv", &csv)?,
    }
    let k0 = estimate_k0(&table, 1.0);
    let k0_dilated = estimate_k0(&table, 2.0);
    let oracle = closed_form_p1(a.alpha).map(|(name, f)| {
        let worst = table
            .radii
            .iter()
            .zip(&table.p1_values)
            .filter(|(r, _)| **r <= 20.0)
            .map(|(r, p)| (p / f(*r) - 1.0).abs())
            .fold(0.0, f64::max);
        json!({"name": name, "max_rel_error": worst})
    });
    let report = json!({
        "alpha": a.alpha,
        "d": table.d,
        "points": table.radii.len(),
        "normalization": table.normalization(),
        "k0": k0,
        "k0_dilated": k0_dilated,
        "k0_dilation_drift": (k0.value / k0_dilated.value - 1.0).abs(),
        "closed_form": oracle,
    });
    out.write("kernel.json", &json_bytes(&report)?)?;
    let args = BTreeMap::from([("alpha".to_string(), a.alpha.to_string())]);
    out.finish("kernel", &args, None, None)?;
    println!("alpha = {}  k0 = {:.6}  (dilated: {:.6})", a.alpha, k0.value, k0_dilated.value);
    if !k0.value.is_finite() {
        println!("no power-law envelope bounds this kernel (alpha = 2)");
    }
    Ok(0)
}

/// p₁ in d = 3 where a closed form exists.
fn closed_form_p1(alpha: f64) -> Option<(&'static str, fn(f64) -> f64)> {
    use std::f64::consts::PI;
    if alpha == 2.0 {
        Some(("gaussian", |r| (4.0 * PI).powf(-1.5) * (-r * r / 4.0).exp()))
    } else if alpha == 1.0 {
        Some(("cauchy", |r| 1.0 / (PI * PI * (1.0 + r * r).powi(2))))
    } else {
        None
    }
}

fn load_config(path: &Path, out_dir: Option<PathBuf>) -> stablehk::Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::load(path)?;
    let dir = out_dir.unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, dir))
}

fn field_bytes(field: &KernelField) -> stablehk::Result<Vec<u8>> {
    let mut b = Vec::new();
    field.write_csv(&mut b)?;
    Ok(b)
}

#[derive(Serialize)]
struct BoxRecord {
    t: f64,
    x: Vec<f64>,
    box_size: f64,
    doublings: usize,
    predicted_margin_mass: f64,
    meets_tolerance: bool,
    observed_margin_mass: f64,
}

fn run_simulate(a: SimulateArgs) -> stablehk::Result<u8> {
    let (cfg, dir) = load_config(&a.config, a.out_dir)?;
    let base = cfg.suite()?;
    let p = cfg.params()?;
    let mut fine = KernelField::default();
    let mut half = KernelField::default();
    let mut eps_rows = Vec::new();
    let mut boxes = Vec::new();
    for &t in &cfg.design.times {
        let suite = base.rescaled(t);
        let sc = &suite.config;
        let design = &suite.design;
        let l = t.powf(1.0 / p.alpha);
        match cfg.backend {
            BackendChoice::Mc => {
                let pair = mc_field_pair(sc, design)?;
                fine.extend(pair.fine);
                half.extend(pair.coarse);
                if !sc.eps_schedule.is_empty() {
                    for (k, x0) in design.starts(p.d, p.alpha).iter().enumerate() {
                        let mut c = sc.clone();
                        c.seed = start_seed(sc.seed, k);
                        for (e0, e1, w1) in eps_refinement_study(x0, &c)? {
                            let mut row = vec![t.to_string()];
                            row.extend(x0.iter().map(|v| v.to_string()));
                            row.extend([e0.to_string(), e1.to_string(), w1.to_string()]);
                            eps_rows.push(row);
                        }
                    }
                }
            }
            BackendChoice::Pde => {
                for x0 in design.starts(p.d, p.alpha) {
                    let offset = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let choice = box_for_margin(sc.grid, p.alpha, t, offset, 1e-4, 2)?;
                    let mut c = sc.clone();
                    c.grid = choice.grid;
                    let start = mollified_delta(c.grid, [x0[0], x0[1], x0[2]]);
                    let run = propagate_with(&start, Direction::FokkerPlanck, &c, &PropagateOptions::default())?;
                    let half_box = 0.5 * c.grid.box_size;
                    for y in design.targets(&x0, p.alpha) {
                        let inside = y.iter().all(|v| v.abs() < half_box);
                        let v = if inside { run.field.value_at(&y).max(0.0) } else { 0.0 };
                        fine.points.push(KernelPoint {
                            t,
                            x: x0.clone(),
                            y,
                            estimate: v,
                            stderr: 0.0,
                            backend: Backend::Pde,
                            resolution: run.field.dx(),
                            inconclusive: !inside,
                        });
                    }
                    boxes.push(BoxRecord {
                        t,
                        x: x0,
                        box_size: c.grid.box_size,
                        doublings: choice.doublings,
                        predicted_margin_mass: choice.predicted_margin_mass,
                        meets_tolerance: choice.meets_tolerance,
                        observed_margin_mass: run.margin_mass,
                    });
                }
            }
            BackendChoice::Radial => {
                let settings = suite.radial;
                let prof = settings
                    .solver(&sc.params, t)?
                    .density_from_origin(t, settings.sigma0 * l)?;
                let x0 = vec![0.0; p.d];
                for y in design.targets(&x0, p.alpha) {
                    let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                    fine.points.push(KernelPoint {
                        t,
                        x: x0.clone(),
                        y,
                        estimate: prof.at(r).max(0.0),
                        stderr: 0.0,
                        backend: Backend::Radial,
                        resolution: prof.dr,
                        inconclusive: false,
                    });
                }
            }
        }
    }
    let mut out = OutputDir::new(&dir);
    out.write("field.csv", &field_bytes(&fine)?)?;
    if !half.points.is_empty() {
        out.write("field_half.csv", &field_bytes(&half)?)?;
    }
    if !eps_rows.is_empty() {
        let mut header = vec!["t".to_string()];
        header.extend((1..=p.d).map(|i| format!("x{i}")));
        header.extend(["eps_a", "eps_b", "w1_radius"].map(String::from));
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        out.write("eps_study.csv", &csv_bytes(&h, &eps_rows)?)?;
    }
    if !boxes.is_empty() {
        out.write("pde_boxes.json", &json_bytes(&boxes)?)?;
        if boxes.iter().any(|b| !b.meets_tolerance) {
            eprintln!("note: the L/4 margin tolerance is out of reach for some runs; see pde_boxes.json");
        }
    }
    let args = BTreeMap::from([("config".to_string(), a.config.display().to_string())]);
    out.finish("simulate", &args, Some(&cfg.canonical_json()), Some(cfg.seed))?;
    let usable = fine.points.iter().filter(|p| !p.inconclusive).count();
    println!("{} design points, {usable} usable, written to {}", fine.points.len(), dir.display());
    Ok(0)
}

fn run_verify(a: VerifyArgs) -> stablehk::Result<u8> {
    let (cfg, dir) = load_config(&a.config, a.out_dir)?;
    let theorems: Vec<Theorem> = if a.theorems.is_empty() {
        Theorem::ALL.to_vec()
    } else {
        let mut v = a.theorems.clone();
        v.sort();
        v.dedup();
        v
    };
    let base = cfg.suite()?;
    let mut out = OutputDir::new(&dir);
    let mut reports: Vec<BoundReport> = Vec::new();
    for &t in &cfg.design.times {
        let res = base.rescaled(t).run(&theorems)?;
        if let Some(pair) = &res.field {
            out.write(&format!("fields/field_t{t}.csv"), &field_bytes(&pair.fine)?)?;
            out.write(&format!("fields/field_t{t}_half.csv"), &field_bytes(&pair.coarse)?)?;
        }
        reports.extend(res.reports);
    }
    let t_ref = cfg
        .design
        .times
        .iter()
        .copied()
        .min_by(|a, b| (a.ln().abs()).total_cmp(&b.ln().abs()))
        .expect("times are nonempty");
    reports.extend(scaling_reports(&reports, t_ref));
    for th in &theorems {
        let mine: Vec<BoundReport> = reports.iter().filter(|r| r.theorem == *th).cloned().collect();
        out.write(&format!("reports/{}.json", th.id()), &json_bytes(&mine)?)?;
        out.write(&format!("reports/{}.txt", th.id()), format_reports(&mine).as_bytes())?;
    }
    let table = format_reports(&reports);
    out.write("reports/summary.txt", table.as_bytes())?;
    let ids: Vec<&str> = theorems.iter().map(|t| t.id()).collect();
    let args = BTreeMap::from([
        ("config".to_string(), a.config.display().to_string()),
        ("theorems".to_string(), ids.join(",")),
    ]);
    out.finish("verify", &args, Some(&cfg.canonical_json()), Some(cfg.seed))?;
    print!("{table}");
    let verdict = Verdict::combine(reports.iter().map(|r| &r.verdict));
    println!("overall: {}", verdict.as_str());
    Ok(verdict.exit_code() as u8)
}

fn run_props(a: PropsArgs) -> stablehk::Result<u8> {
    let params = ModelParams::new(a.d, a.alpha, a.kappa, 0.0)?;
    let suite = lemma_suite(a.draws, a.seed);
    let kappa2 = kappa(2.0)?;
    let example = extrapolation_constant(&ExtrapolationInput {
        p: 1.0,
        q: 2.0,
        r: Exponent::Finite(4.0),
        nu: 1.0,
        m1: 1.0,
        m2: 1.0,
    })?;
    let nash = nash_constants(&params, 1.0, 1.0, 30)?;
    let weights = b22_b23_verifier(&params, &[0.25, 1.0, 4.0])?;
    let report = json!({
        "lemma_suite": suite,
        "kappa_at_2": kappa2,
        "extrapolation_example": {"p": 1.0, "q": 2.0, "r": 4.0, "nu": 1.0, "m1": 1.0, "m2": 1.0, "result": example},
        "nash_constants": nash,
        "weight_conditions": weights,
    });
    let mut out = OutputDir::new(&a.out_dir);
    out.write("props.json", &json_bytes(&report)?)?;
    let args = BTreeMap::from([
        ("draws".to_string(), a.draws.to_string()),
        ("d".to_string(), a.d.to_string()),
        ("alpha".to_string(), a.alpha.to_string()),
        ("kappa".to_string(), a.kappa.to_string()),
    ]);
    out.finish("props", &args, None, Some(a.seed))?;
    let violations = suite.total_violations();
    println!("draws {}  violations {violations}", suite.draws);
    for (name, v) in &suite.violations {
        println!("  {name:<9} {v}");
    }
    println!("kappa(2) = {kappa2}");
    println!("extrapolation M = {}", example.m);
    for (r, k) in &suite.kappa_table {
        println!("  kappa({r}) = {k:.12}");
    }
    let ok = violations == 0 && (kappa2 - 1.0).abs() <= 1e-12 && example.m == 512.0 && weights.holds;
    Ok(if ok { 0 } else { 1 })
}
