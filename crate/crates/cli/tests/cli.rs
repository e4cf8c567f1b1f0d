use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_severity");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn strip_meta(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.remove("meta");
    }
    v
}

/// Synthetic data plus a tiny config; returns the config path.
fn setup(dir: &Path, rows: usize) -> PathBuf {
    ok(
        dir,
        &["synth", "--rows", &rows.to_string(), "--shift", "1.0", "--out-dir", "data"],
    );
    let cfg = serde_json::json!({
        "data": "data/data.csv",
        "schema": "data/schema.json",
        "seed": 11,
        "association": {"threshold": 0.05},
        "autoencoder": {"encoder_widths": [16, 8], "epochs": 3, "batch_size": 100},
        "classifier": {"initial_neurons": 16, "batch_size": 100, "epochs": 3},
        "encoded_classifier": {"initial_neurons": 16, "batch_size": 100, "epochs": 3},
        "grid": {
            "initial_neurons": [8, 12, 16],
            "initial_dropout": [0.2, 0.3, 0.4],
            "batch_size": [100, 200, 500],
            "l2_penalty": [0.001, 0.0001]
        },
        "cv": {"k": 10}
    });
    let path = dir.join("cfg.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn staged_chain_and_predict_reproduces_split_confusions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir, 1000);
    let c = ["--config", "cfg.json"];
    for stage in ["stats", "associate", "preprocess", "train-ae", "encode"] {
        ok(dir, &[&c[..], &[stage]].concat());
    }
    ok(dir, &[&c[..], &["train"]].concat());
    ok(dir, &[&c[..], &["train", "--input", "latent"]].concat());
    let work = dir.join("work");
    for f in [
        "summary.json",
        "association.csv",
        "selection.json",
        "features/preprocess.json",
        "ae/model.json",
        "models/dnn/model.json",
        "models/encoder_dnn/model.json",
    ] {
        assert!(work.join(f).exists(), "{f} missing");
    }
    assert!(fs::read_dir(&work)
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".incomplete")));

    // the training CSV is exactly train ∪ val ∪ test
    let pred = ok(dir, &[&c[..], &["predict", "--input", "data/data.csv"]].concat());
    assert_eq!(pred["rows"], 1000);
    assert_eq!(pred["labelled_rows"], 1000);
    let report = read_json(work.join("models/dnn/report.json"));
    let mut merged = vec![vec![0u64; 4]; 4];
    for split in ["train", "val", "test"] {
        let counts = &report["metrics"][split]["confusion"]["counts"];
        for (i, row) in counts.as_array().unwrap().iter().enumerate() {
            for (j, v) in row.as_array().unwrap().iter().enumerate() {
                merged[i][j] += v.as_u64().unwrap();
            }
        }
    }
    let got: Vec<Vec<u64>> =
        serde_json::from_value(pred["metrics"]["confusion"]["counts"].clone()).unwrap();
    assert_eq!(got, merged);
    let csv = fs::read_to_string(work.join("predictions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
    assert_eq!(csv.lines().next(), Some("row,predicted,actual"));
}

#[test]
fn cv_reports_every_fold_with_mean_and_spread() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // the rarest class needs at least k rows
    setup(dir, 2500);
    let c = ["--config", "cfg.json"];
    ok(dir, &[&c[..], &["associate"]].concat());
    ok(dir, &[&c[..], &["preprocess"]].concat());
    let out = ok(dir, &[&c[..], &["cv"]].concat());
    let res = &out["result"];
    let folds = res["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 10);
    let bers: Vec<f64> = folds
        .iter()
        .map(|f| f["metrics"]["ber"].as_f64().unwrap())
        .collect();
    let mean = bers.iter().sum::<f64>() / 10.0;
    let var = bers.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / 9.0;
    assert!((res["mean_ber"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((res["std_ber"].as_f64().unwrap() - var.sqrt()).abs() < 1e-12);
    let csv = fs::read_to_string(dir.join("work/cv/dnn.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 13);
    assert!(lines[11].starts_with("mean,"));
    assert!(lines[12].starts_with("std,"));
}

#[test]
fn grid_writes_one_ranked_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir, 600);
    let c = ["--config", "cfg.json", "--set", "classifier.epochs=1"];
    ok(dir, &[&c[..], &["associate"]].concat());
    ok(dir, &[&c[..], &["preprocess"]].concat());
    ok(dir, &[&c[..], &["grid"]].concat());
    let csv = fs::read_to_string(dir.join("work/grid/features.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("rank,index,"));
    let ranks: Vec<usize> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ranks, (1..=54).collect::<Vec<_>>());
}

#[test]
fn pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir, 800);
    let c = ["--config", "cfg.json", "--set", "cv.k=3"];
    ok(dir, &[&c[..], &["--work-dir", "a", "pipeline"]].concat());
    ok(dir, &[&c[..], &["--work-dir", "b", "pipeline"]].concat());
    let a = fs::read_to_string(dir.join("a/table1.csv")).unwrap();
    let b = fs::read_to_string(dir.join("b/table1.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 4);
    assert_eq!(
        strip_meta(read_json(dir.join("a/table1.json"))),
        strip_meta(read_json(dir.join("b/table1.json")))
    );
}

#[test]
fn set_overrides_reach_the_saved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir, 600);
    let c = ["--config", "cfg.json"];
    ok(dir, &[&c[..], &["associate"]].concat());
    ok(dir, &[&c[..], &["preprocess"]].concat());
    let out = ok(
        dir,
        &[&c[..], &["--set", "classifier.epochs=2", "--no-class-weights", "train"]].concat(),
    );
    assert_eq!(out["config"]["epochs"], 2);
    assert_eq!(out["config"]["use_class_weights"], false);
    assert_eq!(out["history"].as_array().unwrap().len(), 2);
}

fn error_of(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"].clone()
}

#[test]
fn failures_map_to_exit_codes_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir, 300);

    let out = run(dir, &["--config", "cfg.json", "--set", "association.threshold=2", "stats"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["category"], "config");

    let out = run(dir, &["--config", "cfg.json", "--data", "nope.csv", "stats"]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(dir.join("bad.csv"), "num_0,Severity\nabc,9\n").unwrap();
    let out = run(dir, &["--config", "cfg.json", "--data", "bad.csv", "--work-dir", "w", "stats"]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_of(&out);
    assert_eq!(err["category"], "data");
    assert_eq!(err["command"], "stats");
    assert_eq!(err["exit_code"], 2);
    assert!(dir.join("w/stats.incomplete").exists());

    let out = run(dir, &["--config", "cfg.json", "--work-dir", "empty", "encode"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.join("empty/encode.incomplete").exists());

    let out = run(dir, &["bogus"]);
    assert_eq!(out.status.code(), Some(1));
}
