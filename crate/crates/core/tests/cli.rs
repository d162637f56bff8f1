use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gflswing::config::TABLE1_TOML;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_gflswing");

fn config(dir: &Path, edits: &[(&str, &str)]) -> std::path::PathBuf {
    let mut text = TABLE1_TOML.to_string();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replacen(from, to, 1);
    }
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn gflswing(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap_or_else(|| panic!("{name}"));
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn no_fault_run_is_flat_and_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), &[("fault_depth = 0.9", "fault_depth = 0.0")]);
    let out = tmp.path().join("out");
    let o = gflswing(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    for k in 1..=5 {
        let th: Vec<f64> = column(&csv, &format!("inv{k}_theta_cg_rad")).iter().map(|s| s.parse().unwrap()).collect();
        assert!(th.iter().all(|t| (t - th[0]).abs() < 1e-6));
    }
    assert_eq!(csv.lines().count(), 1 + 3001);
}

#[test]
fn uncleared_fault_exits_two_and_blames_inv4() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), &[("t_clear = 4e-3", "")]);
    let out = tmp.path().join("out");
    let o = gflswing(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["verdict"]["stable"], false);
    assert_eq!(summary["verdict"]["first_unstable"], "Inv 4");
    assert_eq!(summary["provenance"]["tool_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn early_clearing_exits_zero_and_echoes_defaults() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = gflswing(&["simulate", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let i_max = summary["config"]["fleet"][0]["i_max"].as_f64().unwrap();
    assert!((i_max - 1.2 * 6000.0 / 230.0).abs() < 1e-6);
}

#[test]
fn invalid_config_exits_one_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), &[("dt = 1e-5", "dt = 0.0")]);
    let o = gflswing(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario.dt"));

    let o = gflswing(&["validate", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let o = gflswing(&["simulate", "--bogus"]);
    assert_eq!(code(&o), 1);
    let o = gflswing(&["validate", "--dt", "-1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn validate_accepts_the_bundled_config() {
    let o = gflswing(&["validate"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok 5 inverters"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        assert_eq!(code(&gflswing(&["simulate", "--out", out.to_str().unwrap()])), 0);
        assert_eq!(code(&gflswing(&["cct", "--out", out.to_str().unwrap()])), 0);
    }
    for f in ["trajectory.csv", "summary.json", "cct.json"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn cct_json_has_log_and_audit() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&gflswing(&["cct", "--out", out.to_str().unwrap()])), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cct.json")).unwrap()).unwrap();
    let cct = &v["cct"];
    assert!(cct["log"].as_array().unwrap().len() >= 2);
    assert_eq!(cct["audit"]["transitions"], 1);
    let (lo, hi) = (cct["bracket_lo"].as_f64().unwrap(), cct["bracket_hi"].as_f64().unwrap());
    assert!(lo < hi);
}

#[test]
fn no_fault_cct_reports_both_endpoints() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), &[("fault_depth = 0.9", "fault_depth = 0.0")]);
    let o = gflswing(&["cct", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bracket") && err.contains("stable"), "{err}");
}

#[test]
fn compare_writes_both_trajectories() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&gflswing(&["compare", "--out", out.to_str().unwrap()])), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert!(v["comparison"]["delta"].as_f64().unwrap() > 0.0);
    assert!(out.join("trajectory_uniform.csv").exists());
    assert!(out.join("trajectory_nonuniform.csv").exists());
}

#[test]
fn empty_sweep_matches_cct() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&gflswing(&["sweep", "--out", out.to_str().unwrap()])), 0);
    assert_eq!(code(&gflswing(&["cct", "--out", out.to_str().unwrap()])), 0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cct.json")).unwrap()).unwrap();
    let cct: f64 = column(&csv, "cct_s")[0].parse().unwrap();
    assert!((cct - v["cct"]["cct"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn clearing_time_sweep_matches_single_runs() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("sweep.toml");
    fs::write(&spec, "clearing_time = [0.5e-3, 1.5e-3, 2.5e-3, 3.5e-3, 4.5e-3]\n").unwrap();
    let out = tmp.path().join("out");
    let o = Command::new(BIN)
        .args(["sweep", "--sweep", spec.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("GFLSWING_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let stable: Vec<String> = column(&csv, "stable");
    assert_eq!(stable.len(), 5);
    let transitions = stable.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(transitions, 1, "{stable:?}");

    for (tau, want) in ["0.5e-3", "1.5e-3", "2.5e-3", "3.5e-3", "4.5e-3"].iter().zip(&stable) {
        let t_clear: f64 = 3e-3 + tau.parse::<f64>().unwrap();
        let cfg = config(tmp.path(), &[
            ("t_clear = 4e-3", &format!("t_clear = {t_clear:e}")),
            ("t_end = 30e-3", &format!("t_end = {:e}", 30e-3f64.max(t_clear + 20e-3))),
        ]);
        let single = gflswing(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("single").to_str().unwrap()]);
        assert_eq!(code(&single), if want == "1" { 0 } else { 2 }, "clearing {tau}");
    }
}

#[test]
fn zero_depth_sweep_row_reports_invalid_bracket() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("sweep.toml");
    fs::write(&spec, "fault_depth = [0.0, 0.9]\n").unwrap();
    let out = tmp.path().join("out");
    let o = gflswing(&["sweep", "--sweep", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let errors = column(&csv, "error");
    assert!(errors[0].contains("bracket"), "{}", errors[0]);
    assert!(errors[1].is_empty());
    assert!(!column(&csv, "cct_s")[1].is_empty());
}

#[test]
fn bad_thread_count_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(BIN)
        .args(["sweep", "--out", tmp.path().to_str().unwrap()])
        .env("GFLSWING_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}
