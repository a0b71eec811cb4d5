use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use rnnfc_core::data::LoadReport;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture() -> PathBuf {
    root().join("fixtures/btc_usd_daily.csv")
}

fn rnnfc(args: &[&str], paths: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rnnfc"));
    cmd.args(args);
    for (flag, path) in paths {
        cmd.arg(flag).arg(path);
    }
    cmd.output().expect("spawn rnnfc")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"{"hidden_size": 6, "window_len": 10, "epochs": 1, "k_folds": 3}"#;

#[test]
fn ingest_reports_fixture_span() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("load.json");
    let o = rnnfc(&["ingest"], &[("--csv", &fixture()), ("--report", &report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("span: 2015-12-31 -> 2023-04-06"), "{out}");
    assert!(out.contains("rows: 2654"), "{out}");

    let text = fs::read_to_string(&report).unwrap();
    let parsed: LoadReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&parsed).unwrap() + "\n", text);

    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("load.manifest.json")).unwrap()).unwrap();
    let expected: Value =
        serde_json::from_str(&fs::read_to_string(root().join("fixtures/btc_usd_daily.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["input_sha256"], expected["sha256"]);
    assert_eq!(manifest["command"], "ingest");
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(
        &csv,
        "Date,Open,High,Low,Close,Adj Close,Volume\n2020-01-01,1,2,0.5,1.5,1.5,10\n2020-01-02,1,2,oops,1.5,1.5,10\n",
    )
    .unwrap();
    let o = rnnfc(&["ingest"], &[("--csv", &csv)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let missing = rnnfc(&["ingest"], &[("--csv", &dir.path().join("none.csv"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unknown_config_key_suggests_the_right_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"hiddensize": 8}"#);
    let o = rnnfc(
        &["train", "--cell", "gru"],
        &[("--csv", &fixture()), ("--config", &config), ("--out", &dir.path().join("out"))],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("hiddensize") && err.contains("hidden_size"), "{err}");
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"hidden_size": 4, "window_len": 5, "epochs": 1, "optimizer": "sgd", "learning_rate": 1e300, "clip_norm": 1e300}"#,
    );
    let o = rnnfc(
        &["train", "--cell", "lstm"],
        &[("--csv", &fixture()), ("--config", &config), ("--out", &dir.path().join("out"))],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
}

#[test]
fn one_epoch_default_train_is_quick() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"epochs": 1}"#);
    let out = dir.path().join("out");
    let started = Instant::now();
    let o = rnnfc(&["train", "--cell", "gru"], &[("--csv", &fixture()), ("--config", &config), ("--out", &out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(started.elapsed().as_secs() < 60);
    for f in ["model.json", "metrics.json", "timings.json", "loss_curves.csv", "test_predictions.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let metrics: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["cell_kind"], "gru");
    assert_eq!(metrics["fold_metrics"].as_array().unwrap().len(), 5);
}

#[test]
fn same_seed_gives_identical_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = rnnfc(
            &["train", "--cell", "lstm", "--seed", "5", "--jobs", "2"],
            &[("--csv", &fixture()), ("--config", &config), ("--out", &out)],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["model.json", "loss_curves.csv", "test_predictions.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 5);
    assert_eq!(manifest["config"]["cell_kind"], "lstm");
}

#[test]
fn predict_reproduces_stored_test_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("model");
    let o = rnnfc(&["train", "--cell", "gru"], &[("--csv", &fixture()), ("--config", &config), ("--out", &out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let preds = dir.path().join("preds.csv");
    let o = rnnfc(&["predict"], &[("--model", &out.join("model.json")), ("--csv", &fixture()), ("--out", &preds)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let all = fs::read_to_string(&preds).unwrap();
    let stored = fs::read_to_string(out.join("test_predictions.csv")).unwrap();
    let mut all_lines = all.lines();
    assert_eq!(all_lines.next(), Some("date,pred_close_usd"));
    let all_rows: Vec<&str> = all_lines.collect();
    let stored_rows: Vec<&str> = stored.lines().skip(1).collect();
    // every window gets a row, the last one forecasts past the series end
    assert_eq!(all_rows.len(), 2654 - 10 + 1);
    assert!(all_rows.last().unwrap().starts_with("2023-04-07,"));
    let tail = &all_rows[all_rows.len() - 1 - stored_rows.len()..all_rows.len() - 1];
    assert_eq!(tail, stored_rows.as_slice());

    let o = rnnfc(&["predict", "--last-window-only"], &[("--model", &out.join("model.json")), ("--csv", &fixture())]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
    assert_eq!(stdout.lines().nth(1), all_rows.last().copied());
}

#[test]
fn predict_rejects_short_series_and_bad_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("model");
    let o = rnnfc(&["train", "--cell", "gru"], &[("--csv", &fixture()), ("--config", &config), ("--out", &out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let text = fs::read_to_string(fixture()).unwrap();
    let short: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
    let csv = dir.path().join("short.csv");
    fs::write(&csv, short).unwrap();
    let o = rnnfc(&["predict"], &[("--model", &out.join("model.json")), ("--csv", &csv)]);
    assert_eq!(o.status.code(), Some(2));

    let bogus = dir.path().join("bogus.json");
    fs::write(&bogus, "{}").unwrap();
    let o = rnnfc(&["predict"], &[("--model", &bogus), ("--csv", &fixture())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"hidden_size": 4, "window_len": 8, "epochs": 2, "k_folds": 2}"#);
    let out = dir.path().join("cmp");
    let o = rnnfc(
        &["compare", "--seeds", "1,2,3,4,5"],
        &[("--csv", &fixture()), ("--config", &config), ("--out", &out)],
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let wins = summary["gru_wins"].as_u64().unwrap();
    assert!(wins <= 5);
    assert_eq!(wins + summary["lstm_wins"].as_u64().unwrap(), 5);
    let ratios: Vec<f64> = summary["completed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["speed_ratio"].as_f64().unwrap())
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((summary["mean_speed_ratio"].as_f64().unwrap() - mean).abs() < 1e-12);

    for seed in 1..=5 {
        let seed_dir = out.join(format!("seed-{seed}"));
        let mut names: Vec<String> = fs::read_dir(&seed_dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["loss_curves.csv", "predictions.csv", "report.json"]);
    }
    let curves = fs::read_to_string(out.join("seed-1/loss_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 3);
    assert!(out.join("manifest.json").exists());
}
