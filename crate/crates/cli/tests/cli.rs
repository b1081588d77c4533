use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn resam(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resam"))
        .args(args)
        .env("RESAM_OUTPUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const QUADRATIC: &str = r#"{
    "schema_version": 1,
    "n": 7, "f": 2, "steps": 50, "gamma": 0.1, "beta": 0.9,
    "rule": "cwtm", "attack": "little",
    "problem": "quadratic", "dim": 3, "sigma": 1.0,
    "theta1": [1.0, 1.0, 1.0],
    "seed": 0
}"#;

#[test]
fn audit_cwmed_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = resam(
        &["audit", "--rule", "cwmed", "--n", "5", "--f", "2", "--d", "2", "--trials", "1000"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("audit_cwmed_n5_f2_d2.json"));
    assert_eq!(report["violated"], Value::Bool(false));
    assert_eq!(report["schema_version"], 1);
    assert!(report["lambda_claimed"].as_f64().unwrap() > 0.0);
}

#[test]
fn audit_cge_reports_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("cge.json");
    let out = resam(
        &[
            "audit", "--rule", "cge", "--n", "4", "--f", "1", "--d", "1",
            "--out", report_path.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let report = read_json(&report_path);
    assert_eq!(report["violated"], Value::Bool(true));
    assert_eq!(report["worst_subset"].as_array().unwrap().len(), 3);
    assert_eq!(report["worst_instance"]["xs"].as_array().unwrap().len(), 4);
}

#[test]
fn audit_mean_measure_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = resam(
        &["audit", "--rule", "mean", "--n", "3", "--f", "1", "--d", "1", "--measure"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&dir.path().join("audit_mean_n3_f1_d1.json"));
    assert!(report["lambda_claimed"].is_null());
    assert!(report["lambda_empirical"].as_f64().unwrap() > 0.0);
}

#[test]
fn audit_enumeration_guard() {
    let dir = tempfile::tempdir().unwrap();
    let out = resam(
        &["audit", "--rule", "mda", "--n", "40", "--f", "10", "--d", "1", "--trials", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_with_replicas_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace("\"seed\": 0", "\"seed\": 0, \"replicas\": 5");
    let config = write_config(dir.path(), &body);
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert_eq!(resam(&["run", "--config", &config], &first).status.code(), Some(0));
    assert_eq!(resam(&["run", "--config", &config], &second).status.code(), Some(0));
    let index = read_json(&first.join("index.json"));
    let runs = index["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 5);
    let seeds: Vec<u64> = runs.iter().map(|r| r["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![1, 2, 3, 4, 5]);
    for r in runs {
        let csv = r["csv"].as_str().unwrap();
        let a = fs::read(first.join(csv)).unwrap();
        let b = fs::read(second.join(csv)).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("step,loss,grad_sq,drift_sq,dev_sq,lyapunov,r_norm\n"));
        assert_eq!(text.lines().count(), 51);
    }
}

#[test]
fn invalid_rule_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &QUADRATIC.replace("\"cwtm\"", "\"bulyan\""));
    let out = resam(&["run", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`rule`"), "{stderr}");
}

#[test]
fn unknown_field_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &QUADRATIC.replace("\"gamma\"", "\"gama\""));
    let out = resam(&["run", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));
}

#[test]
fn run_rejects_sweep_but_sweep_runs_it() {
    let dir = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace(
        "\"seed\": 0",
        "\"seed\": 0, \"sweep\": {\"rule\": [\"mda\", \"gm\"], \"beta\": [0.0, 0.9], \"attack\": [\"none\", \"empire\"]}",
    );
    let config = write_config(dir.path(), &body);
    assert_eq!(resam(&["run", "--config", &config], dir.path()).status.code(), Some(2));
    let out = resam(&["sweep", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let index = read_json(&dir.path().join("index.json"));
    let runs = index["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 8);
    let cells: Vec<(String, String, f64)> = runs
        .iter()
        .map(|r| {
            (
                r["rule"].as_str().unwrap().to_string(),
                r["attack"].as_str().unwrap().to_string(),
                r["beta"].as_f64().unwrap(),
            )
        })
        .collect();
    assert_eq!(cells[0], ("mda".into(), "none".into(), 0.0));
    assert_eq!(cells[1], ("mda".into(), "none".into(), 0.9));
    assert_eq!(cells[2], ("mda".into(), "empire".into(), 0.0));
    assert_eq!(cells[7], ("gm".into(), "empire".into(), 0.9));
    let summary = read_json(&dir.path().join(runs[0]["summary"].as_str().unwrap()));
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["steps_completed"], 50);
}

#[test]
fn theorem_mode_writes_theory_block() {
    let dir = tempfile::tempdir().unwrap();
    let body = QUADRATIC
        .replace("\"gamma\": 0.1", "\"gamma\": \"theorem\"")
        .replace("\"beta\": 0.9", "\"beta\": \"theorem\"")
        .replace("\"steps\": 50", "\"steps\": 200")
        .replace("\"n\": 7, \"f\": 2", "\"n\": 7, \"f\": 1")
        .replace("\"cwtm\"", "\"mda\"");
    let config = write_config(dir.path(), &body);
    let out = resam(&["run", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&dir.path().join("runs/run-00000.json"));
    let theory = &summary["theory"];
    assert!(theory["bound"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["gamma"], theory["gamma"]);
}

#[test]
fn divergence_policy() {
    let dir = tempfile::tempdir().unwrap();
    let body = QUADRATIC
        .replace("\"cwtm\"", "\"mean\"")
        .replace("\"little\"", "\"empire\", \"attack_zeta\": 1e6")
        .replace("\"gamma\": 0.1", "\"gamma\": 1.0")
        .replace("\"beta\": 0.9", "\"beta\": 0.0")
        .replace("\"steps\": 50", "\"steps\": 500")
        .replace("\"sigma\": 1.0", "\"sigma\": 0.0");
    let config = write_config(dir.path(), &body);
    assert_eq!(resam(&["run", "--config", &config], dir.path()).status.code(), Some(0));
    let index = read_json(&dir.path().join("index.json"));
    assert!(index["runs"][0]["diverged_at"].as_u64().is_some());
    let strict = write_config(dir.path(), &body.replace("\"seed\": 0", "\"seed\": 0, \"fail_on_divergence\": true"));
    assert_eq!(resam(&["run", "--config", &strict], dir.path()).status.code(), Some(1));
}
