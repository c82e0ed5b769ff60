use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn parainv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parainv")).args(args).output().unwrap()
}

fn run_into(scenario: &str, dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", scenario, "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    parainv(&args)
}

fn summary(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}_summary.json"))).unwrap()).unwrap()
}

fn csv_column(dir: &Path, name: &str, column: &str) -> Vec<f64> {
    let text = fs::read_to_string(dir.join(format!("{name}_trajectory.csv"))).unwrap();
    let mut lines = text.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == column).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn list_prints_shipped_scenarios() {
    let out = parainv(&["list"]);
    assert!(out.status.success());
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(
        names,
        ["heat_exact", "logistic", "time_varying_diffusion", "ball_contraction", "counterexample", "restart_probe_demo"]
    );
}

#[test]
fn logistic_stays_in_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into("logistic", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "logistic");
    assert_eq!(s["passed"], true);
    assert!(s["trajectory"]["min_nodal"].as_f64().unwrap() >= -1e-9);
    assert!(s["trajectory"]["max_nodal"].as_f64().unwrap() <= 1.0 + 1e-9);
    assert!(s["constants"]["q"].as_f64().unwrap() > 0.0);
    assert!(csv_column(dir.path(), "logistic", "min_nodal").iter().all(|x| *x >= -1e-9));
}

#[test]
fn counterexample_fails_with_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into("counterexample", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let s = summary(dir.path(), "counterexample");
    assert_eq!(s["passed"], false);
    let worst = s["checks"]["pointwise"]["worst_margin"].as_f64().unwrap();
    assert!((worst + 1.0).abs() <= 1e-12);
    assert_eq!(s["checks"]["pointwise"]["worst_state"], serde_json::json!([1.0, -1.0]));
    let exact = (1.0 - (-0.2f64).exp()) / 2.0;
    let violation = s["trajectory"]["final_distance"].as_f64().unwrap();
    assert!((violation - exact).abs() <= 1e-3, "{violation}");
    assert!((s["trajectory"]["max_distance_time"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    for check in ["criterion", "distance", "probe", "sampling"] {
        assert_eq!(s["checks"][check]["passed"], false, "{check}");
    }
}

#[test]
fn shipped_invariant_scenarios_pass() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["heat_exact", "time_varying_diffusion", "ball_contraction", "restart_probe_demo"] {
        let out = run_into(name, dir.path(), &[]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let heat = summary(dir.path(), "heat_exact");
    let t = csv_column(dir.path(), "heat_exact", "t");
    let max = csv_column(dir.path(), "heat_exact", "max_nodal");
    let last = t.len() - 1;
    // e^{-π²t} decay of the peak, up to discretisation error
    let exact = (-std::f64::consts::PI.powi(2) * t[last]).exp();
    assert!((max[last] - exact).abs() <= 0.05 * exact, "{} vs {exact}", max[last]);
    assert_eq!(heat["checks"]["ftc"]["passed"], true);
}

#[test]
fn empty_checks_write_trajectory_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plain.cfg");
    fs::write(
        &cfg,
        r#"
name = "plain"
seed = 0
mode = "matrix"
matrix = { operator = [[2.0]] }
initial = { kind = "values", values = [1.0] }
set = { kind = "whole" }
grid = { a = 0.0, b = 1.0, steps = 8 }
"#,
    )
    .unwrap();
    let out = run_into(cfg.to_str().unwrap(), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("plain_trajectory.csv").exists());
    assert!(!dir.path().join("plain_summary.json").exists());
    assert_eq!(csv_column(dir.path(), "plain", "t").len(), 9);
}

#[test]
fn validate_reports_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/logistic.cfg")).unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, text.replace("theta = 1.0", "theta = 0.2")).unwrap();
    let out = parainv(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("grid.theta"));

    let good = parainv(&["validate", concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/logistic.cfg")]);
    assert!(good.status.success());

    let extra = dir.path().join("extra.cfg");
    fs::write(&extra, text.replace("[grid]", "[grid]\nsubsteps = 2")).unwrap();
    let out = run_into(extra.to_str().unwrap(), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("substeps"));
}

#[test]
fn output_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        assert_eq!(run_into("logistic", dir.path(), &["--seed-override", "99"]).status.code(), Some(0));
    }
    for file in ["logistic_trajectory.csv", "logistic_summary.json"] {
        let x = fs::read(a.path().join(file)).unwrap();
        let y = fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
    assert_eq!(summary(a.path(), "logistic")["seed"], 99);
}

#[test]
fn tolerance_scale_changes_recorded_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_into("counterexample", dir.path(), &["--tol-scale", "1e6"]).status.code(), Some(1));
    let s = summary(dir.path(), "counterexample");
    let tol = s["checks"]["pointwise"]["tolerance"].as_f64().unwrap();
    assert!((tol - 1e-6).abs() < 1e-18);
    assert_eq!(run_into("counterexample", dir.path(), &["--tol-scale", "0"]).status.code(), Some(2));
}
