//! Loss assembly, optimizers, the per-fold training loop and
//! cross-validation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cells::{accumulate_backward, forward_sequence, CellKind, Gradients, Params, ParamsDocument, TensorRole};
use crate::data::{kfold_split, FeatureSet, FoldScheme, FoldSplit, Scaler, WindowSample};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

/// Candidate L2 strengths for [`select_lambda`].
pub const LAMBDA_GRID: [f64; 5] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Every training hyperparameter. JSON field names match the struct fields;
/// unknown keys are rejected by [`TrainConfig::from_json`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub cell_kind: CellKind,
    pub hidden_size: usize,
    pub window_len: usize,
    pub feature_set: FeatureSet,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub clip_norm: f64,
    pub k_folds: usize,
    pub fold_scheme: FoldScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            cell_kind: CellKind::Lstm,
            hidden_size: 32,
            window_len: 30,
            feature_set: FeatureSet::Close,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            lambda: 1e-4,
            seed: 42,
            optimizer: OptimizerKind::Adam,
            clip_norm: 5.0,
            k_folds: 5,
            fold_scheme: FoldScheme::Contiguous,
        }
    }
}

pub const CONFIG_KEYS: [&str; 13] = [
    "cell_kind",
    "hidden_size",
    "window_len",
    "feature_set",
    "learning_rate",
    "epochs",
    "batch_size",
    "lambda",
    "seed",
    "optimizer",
    "clip_norm",
    "k_folds",
    "fold_scheme",
];

impl TrainConfig {
    /// Parses a JSON object; missing keys take defaults, unknown keys are an
    /// error naming the closest known key.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        for key in obj.keys() {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                let closest = CONFIG_KEYS
                    .iter()
                    .min_by_key(|k| strsim::levenshtein(k, key))
                    .expect("non-empty key list");
                return Err(Error::Config(format!(
                    "unknown config key `{key}` (did you mean `{closest}`?)"
                )));
            }
        }
        let config: TrainConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("window_len", self.window_len),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.k_folds < 2 {
            return Err(Error::Config("k_folds must be at least 2".into()));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.feature_set.len()
    }
}

/// Seed for fold `stream`; the final all-data model uses stream `k_folds`.
pub fn stream_seed(seed: u64, stream: usize) -> u64 {
    seed ^ stream as u64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

impl LossCurve {
    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.train.iter().chain(&self.validation).all(|v| v.is_finite())
    }

    /// Element-wise mean of equally long curves.
    pub fn mean(curves: &[&LossCurve]) -> LossCurve {
        let Some(first) = curves.first() else {
            return LossCurve::default();
        };
        let n = curves.len() as f64;
        let avg = |pick: fn(&LossCurve) -> &Vec<f64>| {
            (0..pick(first).len())
                .map(|e| curves.iter().map(|c| pick(c)[e]).sum::<f64>() / n)
                .collect()
        };
        LossCurve {
            train: avg(|c| &c.train),
            validation: avg(|c| &c.validation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: ParamsDocument,
    pub scaler: Scaler,
    pub config: TrainConfig,
    pub loss_curve: LossCurve,
    /// Wall-clock seconds of each epoch's training pass.
    #[serde(default)]
    pub epoch_seconds: Vec<f64>,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Prediction on the normalized scale for `T` rows of unscaled feature
    /// values.
    pub fn predict_inputs_normalized(&self, inputs: &[Vec<f64>]) -> Result<f64> {
        let width = self.config.input_size();
        if inputs.len() != self.config.window_len || inputs.iter().any(|r| r.len() != width) {
            return Err(Error::Compatibility(format!(
                "model expects windows of {} x {width} features, got {} x {}",
                self.config.window_len,
                inputs.len(),
                inputs.first().map_or(0, |r| r.len())
            )));
        }
        let xs: Vec<Matrix> = inputs
            .iter()
            .map(|row| {
                let scaled: Vec<f64> = row.iter().enumerate().map(|(k, &v)| self.scaler.transform(k, v)).collect();
                Matrix::column(&scaled)
            })
            .collect();
        Ok(forward_sequence(&self.params.params, &xs, None)?.prediction)
    }

    /// Prediction on the normalized scale for an unscaled window.
    pub fn predict_normalized(&self, raw: &WindowSample) -> Result<f64> {
        self.predict_inputs_normalized(&raw.inputs)
    }

    pub fn predict_usd(&self, raw: &WindowSample) -> Result<f64> {
        Ok(self.scaler.inverse_close(self.predict_normalized(raw)?))
    }
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Argument(format!(
            "metric needs equal non-empty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// `λ Σ w²` over weight matrices; biases are excluded.
pub fn l2_penalty(params: &Params, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda
        * params
            .tensors()
            .iter()
            .filter(|(_, role, _)| *role == TensorRole::Weight)
            .map(|(_, _, m)| m.sum_sq())
            .sum::<f64>()
}

/// Adds `2λw` to the gradient of every weight entry.
pub fn add_l2_gradient(params: &Params, lambda: f64, grads: &mut Gradients) -> Result<()> {
    if lambda == 0.0 {
        return Ok(());
    }
    params.check_congruent(grads)?;
    for ((_, role, g), (_, _, w)) in grads.tensors_mut().into_iter().zip(params.tensors()) {
        if role == TensorRole::Weight {
            g.axpy_assign(2.0 * lambda, w)?;
        }
    }
    Ok(())
}

/// Sum of squared weight entries (biases excluded).
pub fn weight_sum_sq(params: &Params) -> f64 {
    l2_penalty(params, 1.0)
}

pub fn global_norm(grads: &Gradients) -> f64 {
    grads.tensors().iter().map(|(_, _, m)| m.sum_sq()).sum::<f64>().sqrt()
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let factor = max_norm / norm;
        for (_, _, m) in grads.tensors_mut() {
            m.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
pub fn adam_step(params: &mut Params, grads: &Gradients, state: &mut AdamState, learning_rate: f64) -> Result<()> {
    params.check_congruent(grads)?;
    params.check_congruent(&state.m)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for ((((_, _, w), (_, _, g)), (_, _, m)), (_, _, v)) in tensors {
        let it = w
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut());
        for (((w, &g), m), v) in it {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Plain gradient descent, `w ← w − lr·g`.
pub fn sgd_step(params: &mut Params, grads: &Gradients, learning_rate: f64) -> Result<()> {
    params.axpy_assign(-learning_rate, grads)
}

fn check_samples(config: &TrainConfig, samples: &[WindowSample], what: &str) -> Result<()> {
    let width = config.input_size();
    for s in samples {
        if s.window_len() != config.window_len || s.inputs.iter().any(|r| r.len() != width) {
            return Err(Error::Compatibility(format!(
                "{what} sample {} has shape {} x {}, config expects {} x {width}",
                s.target_date,
                s.window_len(),
                s.inputs.first().map_or(0, |r| r.len()),
                config.window_len
            )));
        }
    }
    Ok(())
}

fn predictions(params: &Params, samples: &[WindowSample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| Ok(forward_sequence(params, &s.input_matrices(), None)?.prediction))
        .collect()
}

fn targets(samples: &[WindowSample]) -> Vec<f64> {
    samples.iter().map(|s| s.target).collect()
}

/// Trains one model on unscaled `train` windows, monitoring `validation`.
///
/// A scaler is fit on the training windows only and applied to both sets.
/// Each epoch visits mini-batches in a seeded shuffled order; the batch
/// objective is MSE plus the L2 penalty, gradients are averaged over the
/// batch, clipped to `clip_norm` and applied with the configured optimizer.
/// The final-epoch model is returned.
pub fn train_fold(config: &TrainConfig, train: &[WindowSample], validation: &[WindowSample]) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::EmptyInput("train_fold needs non-empty training and validation sets".into()));
    }
    check_samples(config, train, "training")?;
    check_samples(config, validation, "validation")?;

    let scaler = Scaler::fit_samples(config.feature_set, train)?;
    let train = scaler.transform_samples(train)?;
    let validation = scaler.transform_samples(validation)?;
    let train_x: Vec<_> = train.iter().map(|s| s.input_matrices()).collect();
    let val_targets = targets(&validation);

    let mut rng = Rng::new(config.seed);
    let mut params = Params::init(config.cell_kind, config.hidden_size, config.input_size(), &mut rng);
    let mut grads = params.zeros_like();
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = LossCurve::default();
    let mut epoch_seconds = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        rng.shuffle(&mut order);
        let mut weighted_loss = 0.0;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let diverged = Error::Divergence {
                epoch,
                batch: batch_no + 1,
            };
            for (_, _, g) in grads.tensors_mut() {
                g.fill(0.0);
            }
            let b = batch.len() as f64;
            let mut sse = 0.0;
            for &i in batch {
                let out = forward_sequence(&params, &train_x[i], None)?;
                let err = out.prediction - train[i].target;
                sse += err * err;
                accumulate_backward(&params, &out.caches, 2.0 * err / b, &mut grads)?;
            }
            let loss = sse / b + l2_penalty(&params, config.lambda);
            if !loss.is_finite() {
                return Err(diverged);
            }
            weighted_loss += loss * b;

            add_l2_gradient(&params, config.lambda, &mut grads)?;
            clip_global_norm(&mut grads, config.clip_norm);
            match config.optimizer {
                OptimizerKind::Adam => adam_step(&mut params, &grads, &mut adam, config.learning_rate)?,
                OptimizerKind::Sgd => sgd_step(&mut params, &grads, config.learning_rate)?,
            }
            if !params.is_finite() {
                return Err(diverged);
            }
        }
        epoch_seconds.push(started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));

        let val_loss = mse(&predictions(&params, &validation)?, &val_targets)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, batch: 0 });
        }
        curve.train.push(weighted_loss / train.len() as f64);
        curve.validation.push(val_loss);
    }

    Ok(TrainedModel {
        params: ParamsDocument::new(params, Some(config.seed)),
        scaler,
        config: config.clone(),
        loss_curve: curve,
        epoch_seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub split: FoldSplit,
    pub model: TrainedModel,
    /// Normalized-scale validation metrics of the final-epoch model.
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub mean_val_mse: f64,
    /// Sample standard deviation across folds.
    pub std_val_mse: f64,
    pub mean_val_mae: f64,
    pub std_val_mae: f64,
}

impl CrossValidation {
    /// Fold-averaged loss curves.
    pub fn mean_curve(&self) -> LossCurve {
        LossCurve::mean(&self.folds.iter().map(|f| &f.model.loss_curve).collect::<Vec<_>>())
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_fold(config: &TrainConfig, samples: &[WindowSample], split: FoldSplit) -> Result<FoldResult> {
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    let train = pick(&split.train_indices);
    let validation = pick(&split.validation_indices);
    let fold_config = TrainConfig {
        seed: stream_seed(config.seed, split.fold_index),
        ..config.clone()
    };
    let model = train_fold(&fold_config, &train, &validation)?;
    let scaled = model.scaler.transform_samples(&validation)?;
    let pred = predictions(&model.params.params, &scaled)?;
    let tgt = targets(&scaled);
    Ok(FoldResult {
        val_mse: mse(&pred, &tgt)?,
        val_mae: mae(&pred, &tgt)?,
        split,
        model,
    })
}

/// k-fold cross-validation on unscaled windows, one thread.
pub fn cross_validate(config: &TrainConfig, samples: &[WindowSample]) -> Result<CrossValidation> {
    cross_validate_with_jobs(config, samples, 1)
}

/// k-fold cross-validation running up to `jobs` folds concurrently.
///
/// Each fold seeds its own stream with [`stream_seed`] and fits its own
/// scaler, so results do not depend on `jobs`.
pub fn cross_validate_with_jobs(config: &TrainConfig, samples: &[WindowSample], jobs: usize) -> Result<CrossValidation> {
    config.validate()?;
    let splits = kfold_split(samples.len(), config.k_folds, config.fold_scheme, config.seed)?;
    let jobs = jobs.max(1);

    let mut results: Vec<Option<Result<FoldResult>>> = (0..splits.len()).map(|_| None).collect();
    if jobs == 1 {
        for (slot, split) in results.iter_mut().zip(splits) {
            *slot = Some(run_fold(config, samples, split));
        }
    } else {
        let mut pending = splits.into_iter().enumerate().collect::<Vec<_>>().into_iter();
        loop {
            let wave: Vec<_> = pending.by_ref().take(jobs).collect();
            if wave.is_empty() {
                break;
            }
            let done: Vec<(usize, Result<FoldResult>)> = std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .into_iter()
                    .map(|(i, split)| scope.spawn(move || (i, run_fold(config, samples, split))))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("fold thread panicked")).collect()
            });
            for (i, r) in done {
                results[i] = Some(r);
            }
        }
    }

    let folds = results
        .into_iter()
        .enumerate()
        .map(|(fold, r)| {
            r.expect("every fold ran").map_err(|e| Error::InFold {
                fold,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean_val_mse, std_val_mse) = mean_std(&folds.iter().map(|f| f.val_mse).collect::<Vec<_>>());
    let (mean_val_mae, std_val_mae) = mean_std(&folds.iter().map(|f| f.val_mae).collect::<Vec<_>>());
    Ok(CrossValidation {
        folds,
        mean_val_mse,
        std_val_mse,
        mean_val_mae,
        std_val_mae,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    /// `(λ, mean validation MSE)` per grid point.
    pub scores: Vec<(f64, f64)>,
    pub best_lambda: f64,
}

/// Cross-validates each λ in `grid` and picks the lowest mean validation MSE
/// (earliest grid entry on ties).
pub fn select_lambda(
    config: &TrainConfig,
    samples: &[WindowSample],
    grid: &[f64],
    jobs: usize,
) -> Result<(LambdaSweep, CrossValidation)> {
    let mut best: Option<(f64, CrossValidation)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let cv = cross_validate_with_jobs(&TrainConfig { lambda, ..config.clone() }, samples, jobs)?;
        scores.push((lambda, cv.mean_val_mse));
        if best.as_ref().map_or(true, |(_, b)| cv.mean_val_mse < b.mean_val_mse) {
            best = Some((lambda, cv));
        }
    }
    let (best_lambda, cv) = best.ok_or_else(|| Error::Argument("empty lambda grid".into()))?;
    Ok((LambdaSweep { scores, best_lambda }, cv))
}
