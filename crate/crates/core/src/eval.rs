//! Holdout evaluation, the LSTM/GRU comparison, epoch timing and
//! plot-ready exports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cells::{param_count, CellKind};
use crate::data::{holdout_test_split, WindowSample};
use crate::error::{Error, Result};
use crate::training::{
    cross_validate_with_jobs, mae, mean_std, mse, select_lambda, stream_seed, train_fold, CrossValidation,
    LambdaSweep, LossCurve, TrainConfig, TrainedModel,
};

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const LOSS_CURVES_FILE: &str = "loss_curves.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_HEADER: &str = "date,actual_usd,lstm_pred_usd,gru_pred_usd";
pub const LOSS_CURVES_HEADER: &str = "epoch,lstm_train,lstm_val,gru_train,gru_val";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold_index: usize,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cell_kind: CellKind,
    pub test_mse: f64,
    pub test_mae: f64,
    pub test_mse_usd: f64,
    pub test_mae_usd: f64,
    pub mean_epoch_seconds: f64,
    pub param_count: usize,
    pub fold_metrics: Vec<FoldMetrics>,
    pub mean_val_mse: Option<f64>,
    pub std_val_mse: Option<f64>,
    /// Present when λ was chosen by cross-validation over a grid.
    pub lambda_sweep: Option<LambdaSweep>,
    pub config: TrainConfig,
    pub seed: u64,
}

impl MetricsReport {
    pub fn is_valid(&self) -> bool {
        [self.test_mse, self.test_mae, self.test_mse_usd, self.test_mae_usd, self.mean_epoch_seconds]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub date: NaiveDate,
    pub actual_usd: f64,
    pub lstm_pred_usd: f64,
    pub gru_pred_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub lstm: MetricsReport,
    pub gru: MetricsReport,
    pub mse_winner: CellKind,
    /// LSTM mean epoch seconds over GRU mean epoch seconds.
    pub speed_ratio: f64,
    pub predictions: Vec<PredictionRow>,
    /// Fold-averaged cross-validation curves.
    pub lstm_curve: LossCurve,
    pub gru_curve: LossCurve,
}

impl ComparisonReport {
    pub fn arm(&self, kind: CellKind) -> &MetricsReport {
        match kind {
            CellKind::Lstm => &self.lstm,
            CellKind::Gru => &self.gru,
        }
    }
}

/// Test-set predictions of one model, in sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub dates: Vec<NaiveDate>,
    pub normalized: Vec<f64>,
    pub usd: Vec<f64>,
}

pub fn predict_samples(model: &TrainedModel, samples: &[WindowSample]) -> Result<Predictions> {
    let mut out = Predictions {
        dates: Vec::with_capacity(samples.len()),
        normalized: Vec::with_capacity(samples.len()),
        usd: Vec::with_capacity(samples.len()),
    };
    for s in samples {
        let norm = model.predict_normalized(s)?;
        out.dates.push(s.target_date);
        out.normalized.push(norm);
        out.usd.push(model.scaler.inverse_close(norm));
    }
    Ok(out)
}

/// Metrics of `model` on unscaled `test` windows, on the normalized scale of
/// the model's scaler and in USD.
pub fn evaluate(model: &TrainedModel, test: &[WindowSample]) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("evaluate needs a non-empty test set".into()));
    }
    let pred = predict_samples(model, test)?;
    let target_usd: Vec<f64> = test.iter().map(|s| s.target).collect();
    let target_norm: Vec<f64> = target_usd.iter().map(|&t| model.scaler.transform_close(t)).collect();
    Ok(MetricsReport {
        cell_kind: model.config.cell_kind,
        test_mse: mse(&pred.normalized, &target_norm)?,
        test_mae: mae(&pred.normalized, &target_norm)?,
        test_mse_usd: mse(&pred.usd, &target_usd)?,
        test_mae_usd: mae(&pred.usd, &target_usd)?,
        mean_epoch_seconds: mean_epoch_seconds([model.epoch_seconds.as_slice()]),
        param_count: param_count(&model.params.params),
        fold_metrics: Vec::new(),
        mean_val_mse: None,
        std_val_mse: None,
        lambda_sweep: None,
        config: model.config.clone(),
        seed: model.config.seed,
    })
}

/// Mean over all epochs of all runs, dropping each run's first epoch as
/// warm-up when the run has more than one. Zero when nothing was timed.
fn mean_epoch_seconds<'a>(runs: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    let timed: Vec<f64> = runs
        .into_iter()
        .flat_map(|r| if r.len() > 1 { &r[1..] } else { r })
        .copied()
        .collect();
    if timed.is_empty() {
        0.0
    } else {
        timed.iter().sum::<f64>() / timed.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    /// Fraction of the most recent windows held out as the test set.
    pub test_fraction: f64,
    /// Maximum folds trained concurrently.
    pub jobs: usize,
    /// Choose λ per arm by cross-validation over this grid instead of using
    /// the configured value.
    pub lambda_grid: Option<Vec<f64>>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            test_fraction: 0.1,
            jobs: 1,
            lambda_grid: None,
        }
    }
}

/// One arm's outcome inside [`compare_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArmRun {
    pub cv: CrossValidation,
    pub final_model: TrainedModel,
    pub report: MetricsReport,
    pub predictions: Predictions,
}

pub fn compare(config_base: &TrainConfig, samples: &[WindowSample]) -> Result<ComparisonReport> {
    compare_with(config_base, samples, &CompareOptions::default()).map(|(r, _)| r)
}

/// Runs both cells through identical pipelines: holdout split of the most
/// recent windows, k-fold cross-validation on the rest, retraining on all
/// cross-validation windows, and evaluation on the holdout.
///
/// Only `cell_kind` differs between arms. The retrained model uses seed
/// stream `k_folds`, distinct from every fold. Arms run one after the other so
/// their epoch timings do not interfere.
pub fn compare_with(
    config_base: &TrainConfig,
    samples: &[WindowSample],
    options: &CompareOptions,
) -> Result<(ComparisonReport, [ArmRun; 2])> {
    config_base.validate()?;
    let (cv_samples, test) = holdout_test_split(samples, options.test_fraction)?;
    if test.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} windows leave an empty test set at fraction {}",
            samples.len(),
            options.test_fraction
        )));
    }
    let run = |kind: CellKind| {
        let arm = TrainConfig {
            cell_kind: kind,
            ..config_base.clone()
        };
        run_arm(&arm, &cv_samples, &test, options.jobs, options.lambda_grid.as_deref())
    };
    let label = |kind: CellKind| {
        move |e: Error| Error::InArm {
            arm: kind.to_string(),
            source: Box::new(e),
        }
    };
    let lstm = run(CellKind::Lstm).map_err(label(CellKind::Lstm))?;
    let gru = run(CellKind::Gru).map_err(label(CellKind::Gru))?;

    let predictions = test
        .iter()
        .zip(lstm.predictions.usd.iter().zip(&gru.predictions.usd))
        .map(|(s, (&l, &g))| PredictionRow {
            date: s.target_date,
            actual_usd: s.target,
            lstm_pred_usd: l,
            gru_pred_usd: g,
        })
        .collect();
    let speed_ratio = if lstm.report.mean_epoch_seconds > 0.0 && gru.report.mean_epoch_seconds > 0.0 {
        lstm.report.mean_epoch_seconds / gru.report.mean_epoch_seconds
    } else {
        1.0
    };
    let report = ComparisonReport {
        mse_winner: if gru.report.test_mse <= lstm.report.test_mse {
            CellKind::Gru
        } else {
            CellKind::Lstm
        },
        speed_ratio,
        predictions,
        lstm_curve: lstm.cv.mean_curve(),
        gru_curve: gru.cv.mean_curve(),
        lstm: lstm.report.clone(),
        gru: gru.report.clone(),
    };
    Ok((report, [lstm, gru]))
}

/// One cell's pipeline: cross-validation on `cv_samples` (optionally
/// choosing λ from `lambda_grid`), retraining on all of them with seed stream
/// `k_folds`, and evaluation on `test`.
pub fn run_arm(
    config: &TrainConfig,
    cv_samples: &[WindowSample],
    test: &[WindowSample],
    jobs: usize,
    lambda_grid: Option<&[f64]>,
) -> Result<ArmRun> {
    let (config, cv, sweep) = match lambda_grid {
        Some(grid) => {
            let (sweep, cv) = select_lambda(config, cv_samples, grid, jobs)?;
            let config = TrainConfig {
                lambda: sweep.best_lambda,
                ..config.clone()
            };
            (config, cv, Some(sweep))
        }
        None => (config.clone(), cross_validate_with_jobs(config, cv_samples, jobs)?, None),
    };
    let final_config = TrainConfig {
        seed: stream_seed(config.seed, config.k_folds),
        ..config.clone()
    };
    let final_model = train_fold(&final_config, cv_samples, test)?;
    let mut report = evaluate(&final_model, test)?;
    report.mean_epoch_seconds = mean_epoch_seconds(
        cv.folds
            .iter()
            .map(|f| f.model.epoch_seconds.as_slice())
            .chain([final_model.epoch_seconds.as_slice()]),
    );
    report.fold_metrics = cv
        .folds
        .iter()
        .map(|f| FoldMetrics {
            fold_index: f.split.fold_index,
            val_mse: f.val_mse,
            val_mae: f.val_mae,
        })
        .collect();
    report.mean_val_mse = Some(cv.mean_val_mse);
    report.std_val_mse = Some(cv.std_val_mse);
    report.lambda_sweep = sweep;
    report.seed = config.seed;
    report.config = config;
    let predictions = predict_samples(&final_model, test)?;
    Ok(ArmRun {
        cv,
        final_model,
        report,
        predictions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub epochs_measured: usize,
}

/// Trains `kind` for `n_epochs` on `samples` and reports the mean and sample
/// standard deviation of epoch wall-clock time, first epoch excluded.
pub fn benchmark_epoch_time(
    kind: CellKind,
    config: &TrainConfig,
    samples: &[WindowSample],
    n_epochs: usize,
) -> Result<EpochTiming> {
    if n_epochs < 3 {
        return Err(Error::Argument(format!("benchmark needs at least 3 epochs, got {n_epochs}")));
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("benchmark needs samples".into()));
    }
    let config = TrainConfig {
        cell_kind: kind,
        epochs: n_epochs,
        ..config.clone()
    };
    let model = train_fold(&config, samples, &samples[..1])?;
    let (mean_seconds, std_seconds) = mean_std(&model.epoch_seconds[1..]);
    Ok(EpochTiming {
        mean_seconds,
        std_seconds,
        epochs_measured: n_epochs - 1,
    })
}

pub fn predictions_csv(report: &ComparisonReport) -> String {
    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for r in &report.predictions {
        let _ = writeln!(out, "{},{},{},{}", r.date, r.actual_usd, r.lstm_pred_usd, r.gru_pred_usd);
    }
    out
}

pub fn loss_curves_csv(report: &ComparisonReport) -> String {
    let mut out = String::from(LOSS_CURVES_HEADER);
    out.push('\n');
    let (l, g) = (&report.lstm_curve, &report.gru_curve);
    for e in 0..l.len().max(g.len()) {
        let cell = |v: &Vec<f64>| v.get(e).map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e + 1,
            cell(&l.train),
            cell(&l.validation),
            cell(&g.train),
            cell(&g.validation)
        );
    }
    out
}

/// Writes `predictions.csv`, `loss_curves.csv` and `report.json` into
/// `out_dir`, creating it if needed.
pub fn export_report(report: &ComparisonReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = [
        (PREDICTIONS_FILE, predictions_csv(report)),
        (LOSS_CURVES_FILE, loss_curves_csv(report)),
        (REPORT_FILE, serde_json::to_string_pretty(report)?),
    ];
    files
        .into_iter()
        .map(|(name, body)| {
            let path = out_dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{LstmParams, Params, ParamsDocument};
    use crate::data::{make_raw_windows, FeatureSet, PriceSeries, Scaler};
    use crate::linalg::Matrix;

    fn series(n: usize) -> PriceSeries {
        let closes: Vec<f64> = (0..n)
            .map(|i| 100.0 + 20.0 * (i as f64 / 7.0).sin() + i as f64 * 0.3)
            .collect();
        PriceSeries::from_closes(NaiveDate::from_ymd_opt(2021, 3, 1).unwrap(), &closes).unwrap()
    }

    fn config() -> TrainConfig {
        TrainConfig {
            hidden_size: 3,
            window_len: 4,
            epochs: 2,
            batch_size: 16,
            k_folds: 3,
            ..TrainConfig::default()
        }
    }

    /// Model whose prediction is `b_out` whatever the input.
    fn constant_model(c: f64, scaler: Scaler) -> TrainedModel {
        let mut p = LstmParams::zeros(1, 1);
        p.b_out = Matrix::filled(1, 1, c);
        TrainedModel {
            params: ParamsDocument::new(Params::Lstm(p), None),
            scaler,
            config: TrainConfig {
                hidden_size: 1,
                window_len: 2,
                ..TrainConfig::default()
            },
            loss_curve: LossCurve::default(),
            epoch_seconds: vec![],
        }
    }

    fn two_window_setup() -> (Vec<WindowSample>, Scaler) {
        // closes 0,1,0,1 → windows of 2 with targets 0 and 1, scaler span [0,1]
        let s = PriceSeries::from_closes(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), &[0.0, 1.0, 0.0, 1.0]).unwrap();
        let w = make_raw_windows(&s, FeatureSet::Close, 2, 1).unwrap();
        let scaler = Scaler::fit_samples(FeatureSet::Close, &w).unwrap();
        (w, scaler)
    }

    #[test]
    fn constant_prediction_metrics() {
        let (w, scaler) = two_window_setup();
        let r = evaluate(&constant_model(0.5, scaler.clone()), &w).unwrap();
        assert!((r.test_mse - 0.25).abs() < 1e-15);
        assert!((r.test_mae - 0.5).abs() < 1e-15);

        let exact = evaluate(&constant_model(0.0, scaler), &w[..1]).unwrap();
        assert_eq!(
            [exact.test_mse, exact.test_mae, exact.test_mse_usd, exact.test_mae_usd],
            [0.0; 4]
        );
    }

    #[test]
    fn usd_mse_scales_with_span_squared() {
        let s = series(80);
        let w = make_raw_windows(&s, FeatureSet::Close, 4, 1).unwrap();
        let model = train_fold(&config(), &w[..60], &w[60..]).unwrap();
        let r = evaluate(&model, &w[60..]).unwrap();
        let span = model.scaler.close_span();
        let rel = (r.test_mse_usd - r.test_mse * span * span).abs() / r.test_mse_usd;
        assert!(rel < 1e-9, "{rel}");
        assert!((r.test_mae_usd - r.test_mae * span).abs() / r.test_mae_usd < 1e-9);
    }

    #[test]
    fn evaluate_rejects_mismatch_and_empty() {
        let (w, scaler) = two_window_setup();
        let model = constant_model(0.0, scaler);
        assert!(evaluate(&model, &[]).is_err());
        let s = series(20);
        let long = make_raw_windows(&s, FeatureSet::Close, 5, 1).unwrap();
        assert!(matches!(evaluate(&model, &long), Err(Error::Compatibility(_))));
        assert!(evaluate(&model, &w).is_ok());
    }

    #[test]
    fn zero_epoch_comparison_is_well_formed() {
        let w = make_raw_windows(&series(120), FeatureSet::Close, 4, 1).unwrap();
        let cfg = TrainConfig { epochs: 0, ..config() };
        let (report, arms) = compare_with(&cfg, &w, &CompareOptions::default()).unwrap();
        assert_eq!(report.predictions.len(), 12);
        assert!(report.lstm.is_valid() && report.gru.is_valid());
        assert!(report.speed_ratio > 0.0);
        let lower = if report.gru.test_mse <= report.lstm.test_mse { CellKind::Gru } else { CellKind::Lstm };
        assert_eq!(report.mse_winner, lower);
        assert_eq!(arms[0].cv.folds.len(), 3);
        assert!(report.lstm_curve.is_empty());
    }

    #[test]
    fn arms_differ_only_in_cell_kind() {
        let w = make_raw_windows(&series(120), FeatureSet::Close, 4, 1).unwrap();
        let report = compare(&config(), &w).unwrap();
        assert_eq!(report.lstm.cell_kind, CellKind::Lstm);
        assert_eq!(report.gru.cell_kind, CellKind::Gru);
        let mut gru_cfg = report.gru.config.clone();
        gru_cfg.cell_kind = CellKind::Lstm;
        assert_eq!(gru_cfg, report.lstm.config);
        assert_eq!(report.lstm.fold_metrics.len(), 3);
        assert!(report.gru.param_count < report.lstm.param_count);
        assert_eq!(report.lstm_curve.len(), 2);
        assert!(report.speed_ratio > 0.0);
    }

    #[test]
    fn lambda_grid_picks_per_arm() {
        let w = make_raw_windows(&series(90), FeatureSet::Close, 4, 1).unwrap();
        let options = CompareOptions {
            lambda_grid: Some(vec![0.0, 1e-2]),
            ..CompareOptions::default()
        };
        let (report, _) = compare_with(&config(), &w, &options).unwrap();
        for arm in [&report.lstm, &report.gru] {
            let sweep = arm.lambda_sweep.as_ref().unwrap();
            assert_eq!(sweep.scores.len(), 2);
            assert_eq!(arm.config.lambda, sweep.best_lambda);
            let best = sweep.scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            assert_eq!(Some(best), arm.mean_val_mse);
        }
    }

    #[test]
    fn export_round_trip_and_row_counts() {
        let w = make_raw_windows(&series(120), FeatureSet::Close, 4, 1).unwrap();
        let report = compare(&config(), &w).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = export_report(&report, dir.path()).unwrap();
        assert_eq!(files.len(), 3);

        let preds = fs::read_to_string(dir.path().join(PREDICTIONS_FILE)).unwrap();
        let mut lines = preds.lines();
        assert_eq!(lines.next(), Some(PREDICTIONS_HEADER));
        assert_eq!(lines.count(), report.predictions.len());

        let curves = fs::read_to_string(dir.path().join(LOSS_CURVES_FILE)).unwrap();
        let mut lines = curves.lines();
        assert_eq!(lines.next(), Some(LOSS_CURVES_HEADER));
        assert_eq!(lines.count(), 2);

        let text = fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
        let back: ComparisonReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn export_surfaces_path_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let w = make_raw_windows(&series(60), FeatureSet::Close, 4, 1).unwrap();
        let report = compare(&TrainConfig { epochs: 0, ..config() }, &w).unwrap();
        let err = export_report(&report, &blocker.join("sub")).unwrap_err().to_string();
        assert!(err.contains("file"), "{err}");
    }

    #[test]
    fn benchmark_requires_three_epochs() {
        let w = make_raw_windows(&series(40), FeatureSet::Close, 4, 1).unwrap();
        assert!(benchmark_epoch_time(CellKind::Gru, &config(), &w, 2).is_err());
        let t = benchmark_epoch_time(CellKind::Gru, &config(), &w, 3).unwrap();
        assert_eq!(t.epochs_measured, 2);
        assert!(t.mean_seconds > 0.0);
    }

    #[test]
    fn warm_up_epoch_is_dropped() {
        assert_eq!(mean_epoch_seconds([[9.0, 1.0, 3.0].as_slice()]), 2.0);
        assert_eq!(mean_epoch_seconds([[4.0].as_slice()]), 4.0);
        assert_eq!(mean_epoch_seconds(std::iter::empty::<&[f64]>()), 0.0);
    }
}
