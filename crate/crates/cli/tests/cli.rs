use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stablehk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stablehk"))
        .args(args)
        .env("STABLEHK_THREADS", "1")
        .output()
        .unwrap()
}

fn smoke() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json")
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(stablehk(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(stablehk(&["beta", "--kappa-grid", "1:0:3"]).status.code(), Some(64));
    assert_eq!(stablehk(&["verify", "--config", "nope.json"]).status.code(), Some(64));
    let s = smoke();
    let out = stablehk(&["verify", "--config", s.to_str().unwrap(), "--theorems", "no-such-bound"]);
    assert_eq!(out.status.code(), Some(64));
    assert_eq!(stablehk(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let text = std::fs::read_to_string(smoke()).unwrap().replace("\"seed\"", "\"sede\": 1, \"seed\"");
    std::fs::write(&cfg, text).unwrap();
    let out = stablehk(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn beta_curve_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = stablehk(&["beta", "--kappa-grid", "0.1,1,5,10", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("beta.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("kappa,beta,kappa_roundtrip,roundtrip_rel_error"));
    let row5: Vec<&str> = lines.nth(2).unwrap().split(',').collect();
    assert_eq!(row5[0], "5");
    assert!((row5[1].parse::<f64>().unwrap() - 1.388_362_742_339_106).abs() < 1e-10);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "beta");
    assert_eq!(manifest["outputs"][0]["path"], "beta.csv");
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn kernel_reports_closed_form_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = stablehk(&["kernel", "--alpha", "1", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("kernel.json")).unwrap()).unwrap();
    assert!((json["normalization"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(json["closed_form"]["max_rel_error"].as_f64().unwrap() < 1e-8);
    assert!(dir.path().join("kernel_table.csv").exists());
}

#[test]
fn partial_theorem_list_writes_only_those_reports() {
    let dir = tempfile::tempdir().unwrap();
    let s = smoke();
    let out = stablehk(&[
        "verify",
        "--config",
        s.to_str().unwrap(),
        "--theorems",
        "desingularizing-l1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let reports = dir.path().join("reports");
    assert!(reports.join("desingularizing-l1.json").exists());
    assert!(!reports.join("two-sided.json").exists());
    assert!(!dir.path().join("fields").exists());
    let rep: serde_json::Value =
        serde_json::from_slice(&std::fs::read(reports.join("desingularizing-l1.json")).unwrap()).unwrap();
    assert!(rep.as_array().unwrap().iter().all(|r| r["verdict"] == "pass"));
}
