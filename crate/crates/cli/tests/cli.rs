use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn randhyp(task: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_randhyp"))
        .arg(task)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("out/report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn doubling_pipeline_is_certified() {
    let dir = tempfile::tempdir().unwrap();
    let out = randhyp(
        "full-pipeline",
        r#"{"base": {"kind": "dirac"}, "fiber": {"family": "doubling"}, "seed": 1}"#,
        dir.path(),
        &["--threads", "2"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["schema"], "randhyp-report/1");
    assert_eq!(r["verdict"], "certified");
    assert_eq!(r["payload"]["expansion"]["a_estimate"], std::f64::consts::LN_2);
    for file in r["side_files"].as_array().unwrap() {
        assert!(dir.path().join("out").join(file.as_str().unwrap()).exists());
    }
}

#[test]
fn symmetric_rates_are_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = randhyp(
        "corollary",
        r#"{"base": {"kind": "bernoulli", "probabilities": [0.5, 0.5]},
            "fiber": {"family": "bernoulli-linear", "params": {"slopes": [2, 3]}},
            "seed": 3, "task_params": {"per_step_rates": [0.5, 2.0]}}"#,
        dir.path(),
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(dir.path())["verdict"], "inconclusive");
}

#[test]
fn bad_config_exits_with_one_and_names_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = randhyp(
        "lyapunov",
        r#"{"base": {"kind": "bernoulli", "probabilities": [0.5, 0.4]},
            "fiber": {"family": "doubling"}, "task_params": {"samples": 0}}"#,
        dir.path(),
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("base.probabilities"), "{err}");
    assert!(err.contains("seed"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn splitting_on_circle_family_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = randhyp(
        "splitting",
        r#"{"base": {"kind": "dirac"}, "fiber": {"family": "doubling"}, "seed": 1}"#,
        dir.path(),
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fiber.family"));
}

#[test]
fn random_cat_splitting_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = randhyp(
        "splitting",
        r#"{"base": {"kind": "bernoulli", "probabilities": [0.5, 0.5]},
            "fiber": {"family": "random-cat"}, "seed": 5,
            "task_params": {"samples": 10, "n": 2000}}"#,
        dir.path(),
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["verdict"], "certified");
    assert_eq!(r["payload"]["splitting"]["samples"].as_array().unwrap().len(), 10);
    let csv = std::fs::read_to_string(dir.path().join("out/samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn trajectory_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = randhyp(
        "trajectory",
        r#"{"base": {"kind": "rotation", "rotation_number": 0.41421356, "alphabet_size": 2},
            "fiber": {"family": "perturbed-doubling", "params": {"epsilon_max": 0.1}},
            "seed": 11, "task_params": {"n": 25}}"#,
        dir.path(),
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,symbol,x,phi"));
    assert_eq!(lines.count(), 25);
}

#[test]
fn reports_differ_only_in_wall_time() {
    let config = r#"{"base": {"kind": "bernoulli", "probabilities": [0.5, 0.5]},
        "fiber": {"family": "perturbed-doubling", "params": {"epsilon_max": 0.1}},
        "seed": 2, "task_params": {"samples": 4, "grid_size": 512}}"#;
    let runs: Vec<Value> = ["1", "4"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let out = randhyp("certify-expansion", config, dir.path(), &["--threads", threads]);
            assert!(out.status.code() != Some(1), "{}", String::from_utf8_lossy(&out.stderr));
            let mut r = report(dir.path());
            r.as_object_mut().unwrap().remove("wall_time_seconds");
            r
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}
