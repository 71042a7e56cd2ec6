#![cfg(feature = "cli")]

use std::path::Path;
use std::process::Command;

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_richards-ms"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const TINY: &str = r#"{
  "fine_n": 8, "coarse_n": 2, "n_train": 4, "n_test": 2,
  "hidden_widths": [6],
  "picard": {"n_steps": 4},
  "schedule": [1, 3],
  "train": {"epochs": 2, "batch_size": 8}
}"#;

#[test]
fn full_steady_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    let out_s = out.to_string_lossy().into_owned();
    for sub in ["gen-data", "train", "eval-basis", "run-steady", "report"] {
        let o = cli(&[sub, "--config", &cfg, "--out", &out_s, "--nb", "2,3", "--seed", "5", "--threads", "1"]);
        assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "data/steady_nb2.msrd",
        "data/steady_nb3.msrd",
        "models/steady_nb3.msrm",
        "training/steady_nb2_history.csv",
        "basis_error_steady.csv",
        "steady_l2_error.csv",
        "timing.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = std::fs::read_to_string(out.join("steady_h1_error.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "nb,mean,min,max,one_sample");
    assert!(lines[1].starts_with("2,") && lines[2].starts_with("3,"));
    let timing = std::fs::read_to_string(out.join("timing.csv")).unwrap();
    assert!(timing.starts_with("quantity,count,mean,min,max"));
    let saved = std::fs::read_to_string(out.join("config.json")).unwrap();
    assert!(saved.contains("\"seed\": 5"));
}

#[test]
fn time_workflow_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    let out_s = out.to_string_lossy().into_owned();
    let o = cli(&["run-time", "--config", &cfg, "--out", &out_s, "--nb", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let series = std::fs::read_to_string(out.join("time_series_nb2_l2.csv")).unwrap();
    let steps: Vec<&str> = series.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, vec!["1", "3"]);
    assert!(out.join("models/time_nb2_s3.msrm").exists());
    assert!(out.join("time_bochner_l2_error.csv").exists());
}

#[test]
fn unknown_config_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"fine_n": 8, "coarse_n": 2, "bogus": 1}"#);
    let o = cli(&["gen-data", "--config", &cfg, "--out", &dir.path().to_string_lossy()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}
