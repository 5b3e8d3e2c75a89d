//! End-to-end smoke tests of the binary: every subcommand on a small
//! configuration, plus the determinism contract on the manifest hash.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dipole-lab"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dipole-lab-test-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config() -> serde_json::Value {
    serde_json::json!({
        "kernel": {"family": "biweight", "d": 1.0},
        "grid": {"h": 0.03125},
        "initial": {"kind": "indicator", "a": 1.0, "b": 2.0},
        "integrator": {"kind": "rk4", "dt": 0.1},
        "t_final": 16.0,
        "snapshots": {"kind": "explicit", "times": [0.0, 4.0, 8.0, 16.0]},
        "diagnostics": {"inner_from": 8.0, "fit_window": [1.0, 16.0], "asymptotic_gates": false}
    })
}

fn manifest_hash(dir: &Path) -> String {
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    manifest["manifest_hash"].as_str().unwrap().to_string()
}

#[test]
fn evolve_is_deterministic_and_writes_artifacts() {
    let dir = tmp_dir("evolve");
    let cfg_path = dir.join("run.json");
    fs::write(&cfg_path, small_config().to_string()).unwrap();

    let out1 = dir.join("a");
    let st = bin()
        .args(["evolve", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out1)
        .status()
        .unwrap();
    assert!(st.success());
    for f in ["manifest.json", "momenta.csv", "errors.csv", "report.json", "phi.csv"] {
        assert!(out1.join(f).exists(), "{f} missing");
    }
    // four snapshots
    assert_eq!(
        fs::read_dir(&out1)
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .starts_with("snap_")
            })
            .count(),
        4
    );

    let out2 = dir.join("b");
    let st = bin()
        .args(["evolve", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(manifest_hash(&out1), manifest_hash(&out2), "bit-identical reruns");
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn evolve_rejects_invalid_config_listing_all_problems() {
    let dir = tmp_dir("invalid");
    let cfg_path = dir.join("bad.json");
    let mut cfg = small_config();
    cfg["integrator"]["dt"] = serde_json::json!(0.5);
    cfg["initial"] = serde_json::json!({"kind": "hat", "center": 0.05, "width": 0.2});
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = bin()
        .args(["evolve", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("dt"), "{msg}");
    assert!(msg.contains("support extends below 0"), "{msg}");
    // partial outputs removed
    assert!(!dir.join("out").join("manifest.json").exists());
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn verify_reanalyzes_a_trajectory() {
    let dir = tmp_dir("verify");
    let cfg_path = dir.join("run.json");
    fs::write(&cfg_path, small_config().to_string()).unwrap();
    let out = dir.join("traj");
    assert!(bin()
        .args(["evolve", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let report = dir.join("report.json");
    assert!(bin()
        .args(["verify", "--traj"])
        .arg(&out)
        .arg("--report")
        .arg(&report)
        .status()
        .unwrap()
        .success());
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep["m1star"].as_f64().unwrap() > 1.5);
    assert!(rep["checks"]["weighted_mass_drift"]["pass"].as_bool().unwrap());
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn stationary_emits_three_columns() {
    let dir = tmp_dir("stationary");
    let out = dir.join("phi.csv");
    assert!(bin()
        .args([
            "stationary", "--kernel", "biweight", "--d", "1.0", "--h", "0.03125", "--xmax",
            "15", "--tol", "1e-10", "--out"
        ])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,phi,phi_minus_x");
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert_eq!(row.len(), 3);
    assert!((row[0] + 1.0).abs() < 1e-12, "starts at -d");
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn omega_tabulates_both_methods() {
    let dir = tmp_dir("omega");
    let out = dir.join("omega.csv");
    let st = bin()
        .args([
            "omega", "--t", "5", "--method", "both", "--kernel", "biweight", "--d", "1.0",
            "--h", "0.03125", "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("x,omega_series,omega_fourier,gamma_q"));
    // both method columns populated and close at the origin row
    let mid_row = text
        .lines()
        .skip(1)
        .find(|l| l.starts_with("0.0000000000000000e0,"))
        .expect("origin row");
    let cols: Vec<f64> = mid_row.split(',').map(|c| c.parse().unwrap()).collect();
    assert!((cols[1] - cols[2]).abs() < 1e-6);
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn heat_reports_decreasing_errors() {
    let dir = tmp_dir("heat");
    let out = dir.join("heat.json");
    assert!(bin()
        .args(["heat", "--u0", "hat:1:0.1", "--times", "16,64,256", "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let rows = rep["times"].as_array().unwrap();
    let errs: Vec<f64> = rows
        .iter()
        .map(|r| r["weighted_error"].as_f64().unwrap())
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2]);
    assert_eq!(rep["barrier_lattice"]["sign_violations"], 0);
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn sweep_runs_configs_concurrently() {
    let dir = tmp_dir("sweep");
    let mut fast = small_config();
    fast["t_final"] = serde_json::json!(8.0);
    fast["snapshots"] = serde_json::json!({"kind": "explicit", "times": [0.0, 8.0]});
    let spec = serde_json::json!({
        "runs": [
            {"name": "one", "config": fast},
            {"name": "two", "config": small_config()},
        ]
    });
    let spec_path = dir.join("sweep.json");
    fs::write(&spec_path, spec.to_string()).unwrap();
    let out = dir.join("out");
    assert!(bin()
        .args(["sweep", "--config"])
        .arg(&spec_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    assert!(out.join("one").join("manifest.json").exists());
    assert!(out.join("two").join("manifest.json").exists());
    let _ = fs::remove_dir_all(dir);
}
