use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rnnfc_core::data::{holdout_test_split, make_forecast_windows, make_raw_windows, parse_csv, PriceSeries};
use rnnfc_core::eval::{compare_with, export_report, run_arm, CompareOptions};
use rnnfc_core::training::{TrainConfig, TrainedModel};
use rnnfc_core::{CellKind, Error};
use serde::Serialize;

use crate::manifest::RunManifest;

pub const TEST_FRACTION: f64 = 0.1;
pub const HORIZON: usize = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_divergence() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::from(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| io_failure(path, e))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Outcome<PathBuf> {
    fs::write(path, body).map_err(|e| io_failure(path, e))?;
    Ok(path.to_path_buf())
}

fn pretty<T: Serialize>(value: &T) -> Outcome<String> {
    Ok(serde_json::to_string_pretty(value).map_err(Error::from)? + "\n")
}

fn create_dir(path: &Path) -> Outcome {
    fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

fn load_series(csv: &Path, command: &str) -> Outcome<(PriceSeries, RunManifest)> {
    let bytes = read(csv)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Failure {
        code: 2,
        message: format!("{}: not valid UTF-8", csv.display()),
    })?;
    let (series, _) = parse_csv(&text, &csv.display().to_string())?;
    Ok((series, RunManifest::begin(command, csv, &bytes)))
}

/// File values override defaults; flags override both.
fn resolve_config(path: Option<&Path>, cell: Option<CellKind>, seed: Option<u64>) -> Outcome<TrainConfig> {
    let mut config = match path {
        Some(p) => {
            let bytes = read(p)?;
            TrainConfig::from_json(&String::from_utf8_lossy(&bytes))
                .map_err(|e| Failure::from(e).prefixed(&p.display().to_string()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(cell) = cell {
        config.cell_kind = cell;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

impl Failure {
    fn prefixed(mut self, context: &str) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }
}

pub fn ingest(csv: &Path, report: Option<&Path>) -> Outcome {
    let bytes = read(csv)?;
    let text = String::from_utf8_lossy(&bytes);
    let (_, load) = parse_csv(&text, &csv.display().to_string())?;
    println!("source: {}", load.source);
    println!("rows: {}", load.rows);
    println!("dropped_rows: {}", load.dropped_rows);
    println!("span: {} -> {}", load.first_date, load.last_date);
    for f in &load.features {
        println!("{}: min {} max {}", f.feature, f.min, f.max);
    }
    if let Some(path) = report {
        let mut manifest = RunManifest::begin("ingest", csv, &bytes);
        manifest.outputs.push(write(path, pretty(&load)?)?);
        manifest
            .finish(&path.with_extension("manifest.json"))
            .map_err(|e| io_failure(path, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Timings<'a> {
    fold_epoch_seconds: Vec<&'a [f64]>,
    final_epoch_seconds: &'a [f64],
}

pub fn train(csv: &Path, config: Option<&Path>, cell: Option<CellKind>, seed: Option<u64>, out: &Path, jobs: usize) -> Outcome {
    let config = resolve_config(config, cell, seed)?;
    let (series, mut manifest) = load_series(csv, "train")?;
    manifest.config = Some(config.clone());
    let windows = make_raw_windows(&series, config.feature_set, config.window_len, HORIZON)?;
    let (cv_samples, test) = holdout_test_split(&windows, TEST_FRACTION)?;
    let arm = run_arm(&config, &cv_samples, &test, jobs, None)?;
    create_dir(out)?;

    let mut model = arm.final_model.clone();
    model.epoch_seconds.clear();
    let timings = Timings {
        fold_epoch_seconds: arm.cv.folds.iter().map(|f| f.model.epoch_seconds.as_slice()).collect(),
        final_epoch_seconds: &arm.final_model.epoch_seconds,
    };

    let cv_curve = arm.cv.mean_curve();
    let final_curve = &arm.final_model.loss_curve;
    let mut curves = String::from("epoch,cv_train,cv_val,final_train,final_val\n");
    for e in 0..final_curve.len() {
        let _ = writeln!(
            curves,
            "{},{},{},{},{}",
            e + 1,
            cv_curve.train[e],
            cv_curve.validation[e],
            final_curve.train[e],
            final_curve.validation[e]
        );
    }
    let mut preds = String::from("date,pred_close_usd\n");
    for (date, usd) in arm.predictions.dates.iter().zip(&arm.predictions.usd) {
        let _ = writeln!(preds, "{date},{usd}");
    }

    manifest.outputs = vec![
        write(&out.join("model.json"), model.to_json()? + "\n")?,
        write(&out.join("metrics.json"), pretty(&arm.report)?)?,
        write(&out.join("timings.json"), pretty(&timings)?)?,
        write(&out.join("loss_curves.csv"), curves)?,
        write(&out.join("test_predictions.csv"), preds)?,
    ];
    let r = &arm.report;
    println!(
        "{}: test mse {} (usd {}), test mae {} (usd {}), cv mse {} ± {}",
        config.cell_kind,
        r.test_mse,
        r.test_mse_usd,
        r.test_mae,
        r.test_mae_usd,
        arm.cv.mean_val_mse,
        arm.cv.std_val_mse
    );
    let manifest_path = out.join("manifest.json");
    manifest.finish(&manifest_path).map_err(|e| io_failure(&manifest_path, e))
}

#[derive(Debug, Serialize)]
struct SeedOutcome {
    seed: u64,
    lstm_test_mse: f64,
    gru_test_mse: f64,
    lstm_test_mse_usd: f64,
    gru_test_mse_usd: f64,
    mse_winner: CellKind,
    speed_ratio: f64,
}

#[derive(Debug, Serialize)]
struct SeedFailure {
    seed: u64,
    error: String,
}

#[derive(Debug, Serialize)]
struct Summary {
    seeds: Vec<u64>,
    completed: Vec<SeedOutcome>,
    failed: Vec<SeedFailure>,
    gru_wins: usize,
    lstm_wins: usize,
    gru_faster: usize,
    mean_speed_ratio: Option<f64>,
}

pub fn compare(csv: &Path, config: Option<&Path>, seeds: &[u64], out: &Path, jobs: usize) -> Outcome {
    let base = resolve_config(config, None, None)?;
    let (series, mut manifest) = load_series(csv, "compare")?;
    manifest.config = Some(base.clone());
    let windows = make_raw_windows(&series, base.feature_set, base.window_len, HORIZON)?;
    create_dir(out)?;
    let options = CompareOptions {
        test_fraction: TEST_FRACTION,
        jobs,
        lambda_grid: None,
    };

    let mut completed = Vec::new();
    let mut failed = Vec::new();
    let mut worst_code = 0u8;
    for &seed in seeds {
        let config = TrainConfig { seed, ..base.clone() };
        match compare_with(&config, &windows, &options) {
            Ok((report, _)) => {
                let dir = out.join(format!("seed-{seed}"));
                manifest.outputs.extend(export_report(&report, &dir)?);
                println!(
                    "seed {seed}: lstm mse {} gru mse {} winner {} speed ratio {}",
                    report.lstm.test_mse, report.gru.test_mse, report.mse_winner, report.speed_ratio
                );
                completed.push(SeedOutcome {
                    seed,
                    lstm_test_mse: report.lstm.test_mse,
                    gru_test_mse: report.gru.test_mse,
                    lstm_test_mse_usd: report.lstm.test_mse_usd,
                    gru_test_mse_usd: report.gru.test_mse_usd,
                    mse_winner: report.mse_winner,
                    speed_ratio: report.speed_ratio,
                });
            }
            Err(e) => {
                let f = Failure::from(e);
                eprintln!("seed {seed} failed: {}", f.message);
                worst_code = worst_code.max(f.code);
                failed.push(SeedFailure { seed, error: f.message });
            }
        }
    }

    let gru_wins = completed.iter().filter(|o| o.mse_winner == CellKind::Gru).count();
    let summary = Summary {
        seeds: seeds.to_vec(),
        gru_wins,
        lstm_wins: completed.len() - gru_wins,
        gru_faster: completed.iter().filter(|o| o.speed_ratio > 1.0).count(),
        mean_speed_ratio: (!completed.is_empty())
            .then(|| completed.iter().map(|o| o.speed_ratio).sum::<f64>() / completed.len() as f64),
        completed,
        failed,
    };
    manifest.outputs.push(write(&out.join("summary.json"), pretty(&summary)?)?);
    let manifest_path = out.join("manifest.json");
    manifest.finish(&manifest_path).map_err(|e| io_failure(&manifest_path, e))?;

    if worst_code != 0 {
        return Err(Failure {
            code: worst_code,
            message: format!("{} of {} seeds failed", summary.failed.len(), seeds.len()),
        });
    }
    Ok(())
}

pub fn predict(model_path: &Path, csv: &Path, last_window_only: bool, out: Option<&Path>) -> Outcome {
    let model_bytes = read(model_path)?;
    let model = TrainedModel::from_json(&String::from_utf8_lossy(&model_bytes))
        .map_err(|e| Failure::from(e).prefixed(&model_path.display().to_string()))?;
    let (series, mut manifest) = load_series(csv, "predict")?;
    manifest.config = Some(model.config.clone());

    let mut windows = make_forecast_windows(&series, model.config.feature_set, model.config.window_len)?;
    if last_window_only {
        windows.drain(..windows.len() - 1);
    }
    let mut body = String::from("date,pred_close_usd\n");
    for w in &windows {
        let usd = model.scaler.inverse_close(model.predict_inputs_normalized(&w.inputs)?);
        let _ = writeln!(body, "{},{usd}", w.forecast_date);
    }
    match out {
        Some(path) => {
            manifest.outputs.push(write(path, &body)?);
            let manifest_path = path.with_extension("manifest.json");
            manifest.finish(&manifest_path).map_err(|e| io_failure(&manifest_path, e))
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}
