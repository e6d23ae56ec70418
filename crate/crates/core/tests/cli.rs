use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use oclfd::presets;
use oclfd::run::{metrics_document, run_experiment, OutputHeader, SCHEMA_VERSION};
use serde_json::Value;

fn oclfd(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oclfd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("OCLFD_OUT")
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: [&str; 10] = ["--data", "synth3", "--num_tasks", "2", "--cl_type", "nc", "--N", "300", "--seed", "11"];

#[test]
fn invalid_flags_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = oclfd(&["--data", "synth3", "--cl_type", "xx"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("xx"));

    let out = oclfd(&["--data", "synth3", "--agent", "nope"], dir.path());
    assert!(!out.status.success());

    let out = oclfd(&["--data", "synth3", "--num_runs", "0"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn bad_manifest_exits_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = oclfd(&["--data", "does/not/exist.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("oclfd:"));

    let manifest = dir.path().join("m.toml");
    fs::write(dir.path().join("rows.csv"), "1.0,2.0,0\n1.0,x,1\n").unwrap();
    fs::write(
        &manifest,
        "name = \"m\"\nfeature_dim = 2\nclass_count = 2\n[[source_files]]\npath = \"rows.csv\"\n",
    )
    .unwrap();
    let out = oclfd(&["--data", manifest.to_str().unwrap()], &dir.path().join("o"));
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn every_output_file_reconstructs_its_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = oclfd(&[&SMALL[..], &["--agent", "SRTFD"]].concat(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let metrics = read_json(&dir.path().join("metrics.json"));
    let steps = fs::read_to_string(dir.path().join("steps.jsonl")).unwrap();
    let first: Value = serde_json::from_str(steps.lines().next().unwrap()).unwrap();
    let curve = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let curve_header: Value = serde_json::from_str(curve.lines().next().unwrap().trim_start_matches("# ")).unwrap();
    let timing = read_json(&dir.path().join("timing.json"));

    let headers = [&metrics["header"], &first["header"], &curve_header, &timing["header"]];
    for h in headers {
        assert_eq!(h, headers[0]);
        assert_eq!(h["schema_version"], SCHEMA_VERSION);
    }
    let header: OutputHeader = serde_json::from_value(headers[0].clone()).unwrap();
    assert_eq!(header.seed, 11);

    let data = presets::dataset(&header.data, header.config.scenario.init_normal_count, header.seed).unwrap();
    let result = run_experiment(&data, &header.config).unwrap();
    assert_eq!(metrics_document(&header, &result).unwrap(), metrics);
    assert_eq!(steps.lines().count(), result.reports.len() + 1);
}

#[test]
fn multi_run_summary_matches_the_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = oclfd(&[&SMALL[..], &["--agent", "ER", "--num_runs", "3"]].concat(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let keys = ["avg_end_recall", "avg_end_precision", "avg_end_f1", "avg_end_gmean"];
    let runs: Vec<Value> = (0..3)
        .map(|r| read_json(&dir.path().join(format!("run_{r}/metrics.json"))))
        .collect();
    for (r, m) in runs.iter().enumerate() {
        assert_eq!(m["header"]["seed"], 11 + r as u64);
    }
    let summary = read_json(&dir.path().join("summary.json"));
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let (mean_row, std_row) = (&rows[3], &rows[4]);
    assert_eq!(mean_row["label"], "mean");
    for key in keys {
        let v: Vec<f64> = runs.iter().map(|m| m["metrics"][key].as_f64().unwrap()).collect();
        let mean = v.iter().sum::<f64>() / 3.0;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((mean_row[key].as_f64().unwrap() - mean).abs() < 1e-12, "{key}");
        assert!((std_row[key].as_f64().unwrap() - std).abs() < 1e-12, "{key}");
    }
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(csv.starts_with("# {"));
    assert_eq!(csv.lines().count(), 1 + 1 + 5);
}

#[test]
fn environment_overrides_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_oclfd"))
        .args(SMALL)
        .args(["--out", dir.path().join("from_flag").to_str().unwrap()])
        .env("OCLFD_OUT", &env_out)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_out.join("metrics.json").exists());
    assert!(!dir.path().join("from_flag").exists());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = oclfd(&[&SMALL[..], &["--sweep", "rcs.coreset_ratio=0.5,0.9"]].concat(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("rcs.coreset_ratio=0.5,11,"));
    assert!(lines[3].starts_with("rcs.coreset_ratio=0.9,11,"));
    for i in 0..2 {
        let m = read_json(&dir.path().join(format!("sweep_{i}/metrics.json")));
        assert_eq!(m["header"]["config"]["agent"]["rcs"]["coreset_ratio"], [0.5, 0.9][i]);
    }

    let out = oclfd(&[&SMALL[..], &["--sweep", "rcs.coreset_ratio=abc"]].concat(), &dir.path().join("bad"));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not numeric"));
}

#[test]
fn config_file_replaces_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = oclfd::run::ExperimentConfig::default();
    cfg.agent.replay_size = 7;
    cfg.agent.epochs_per_step = 1;
    let path = dir.path().join("exp.toml");
    fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    let out = oclfd(&[&SMALL[..], &["--config", path.to_str().unwrap(), "--audit"]].concat(), &dir.path().join("o"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&dir.path().join("o/metrics.json"));
    assert_eq!(m["header"]["config"]["agent"]["replay_size"], 7);
    assert_eq!(m["header"]["config"]["audit"], true);
    assert_eq!(m["header"]["config"]["scenario"]["num_tasks"], 2);
}
