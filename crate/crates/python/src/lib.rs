//! Python module `rnnfc`: configs, price series, parameters, training,
//! comparison and prediction.
//!
//! Reports cross the boundary as plain dicts and lists (via JSON).

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rnnfc_core::cells::{self, forward_sequence, ParamsDocument};
use rnnfc_core::data::{self, holdout_test_split, make_forecast_windows, make_raw_windows, PriceSeries};
use rnnfc_core::eval::{self, CompareOptions};
use rnnfc_core::training::{TrainConfig, TrainedModel};
use rnnfc_core::{CellKind, Error, Matrix, Params, Rng};

pyo3::create_exception!(rnnfc, DivergenceError, PyRuntimeError, "Training produced a non-finite loss.");

const TEST_FRACTION: f64 = 0.1;

fn to_py(e: Error) -> PyErr {
    match e {
        e if e.is_divergence() => DivergenceError::new_err(e.to_string()),
        e @ Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn json_value<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| to_py(e.into()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn cell_kind(name: &str) -> PyResult<CellKind> {
    name.parse().map_err(to_py)
}

/// Training hyperparameters. Keyword arguments use the JSON field names;
/// unknown names raise `ValueError`.
#[pyclass(name = "TrainConfig", module = "rnnfc", skip_from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    inner: TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let text: String = match kwargs {
            Some(k) => py.import("json")?.call_method1("dumps", (k,))?.extract()?,
            None => "{}".into(),
        };
        Self::from_json(&text)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: TrainConfig::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_value(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("TrainConfig({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

/// Daily OHLCV bars sorted by date.
#[pyclass(name = "PriceSeries", module = "rnnfc")]
struct PyPriceSeries {
    inner: PriceSeries,
}

#[pymethods]
impl PyPriceSeries {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn closes(&self) -> Vec<f64> {
        self.inner.records().iter().map(|r| r.close).collect()
    }

    fn dates(&self) -> Vec<String> {
        self.inner.records().iter().map(|r| r.date.to_string()).collect()
    }

    #[getter]
    fn first_date(&self) -> String {
        self.inner.first_date().to_string()
    }

    #[getter]
    fn last_date(&self) -> String {
        self.inner.last_date().to_string()
    }
}

/// Loads a CSV with header `Date,Open,High,Low,Close,Adj Close,Volume`.
/// Returns `(series, load_report)`.
#[pyfunction]
fn load_csv(py: Python<'_>, path: &str) -> PyResult<(PyPriceSeries, Py<PyAny>)> {
    let (series, report) = data::load_csv(path).map_err(to_py)?;
    Ok((PyPriceSeries { inner: series }, json_value(py, &report)?))
}

/// Cell parameters plus the seed they were drawn from.
#[pyclass(name = "Params", module = "rnnfc", skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: ParamsDocument,
}

#[pymethods]
impl PyParams {
    /// Xavier-uniform weights and zero biases from a SplitMix64 stream.
    #[staticmethod]
    fn init(kind: &str, hidden_size: usize, input_size: usize, seed: u64) -> PyResult<Self> {
        if hidden_size == 0 || input_size == 0 {
            return Err(PyValueError::new_err("sizes must be positive"));
        }
        let params = Params::init(cell_kind(kind)?, hidden_size, input_size, &mut Rng::new(seed));
        Ok(Self {
            inner: ParamsDocument::new(params, Some(seed)),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ParamsDocument::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn cell_kind(&self) -> String {
        self.inner.params.kind().to_string()
    }

    fn param_count(&self) -> usize {
        self.inner.params.param_count()
    }

    /// Unrolls over `xs` (one list of `input_size` values per step) and
    /// returns the scalar output.
    fn predict(&self, xs: Vec<Vec<f64>>) -> PyResult<f64> {
        let steps: Vec<Matrix> = xs.iter().map(|x| Matrix::column(x)).collect();
        Ok(forward_sequence(&self.inner.params, &steps, None).map_err(to_py)?.prediction)
    }
}

/// A model trained by [`train`], with its scaler and loss curves.
#[pyclass(name = "TrainedModel", module = "rnnfc")]
struct PyTrainedModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyTrainedModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: TrainedModel::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn params(&self) -> PyParams {
        PyParams {
            inner: self.inner.params.clone(),
        }
    }

    fn config(&self) -> PyTrainConfig {
        PyTrainConfig {
            inner: self.inner.config.clone(),
        }
    }

    fn loss_curve(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_value(py, &self.inner.loss_curve)
    }

    /// Next-day USD close for every window of `series` as `(date, value)`
    /// pairs; the last pair forecasts past the series end.
    #[pyo3(signature = (series, last_window_only = false))]
    fn predict_next(&self, series: &PyPriceSeries, last_window_only: bool) -> PyResult<Vec<(String, f64)>> {
        let config = &self.inner.config;
        let mut windows = make_forecast_windows(&series.inner, config.feature_set, config.window_len).map_err(to_py)?;
        if last_window_only {
            windows.drain(..windows.len() - 1);
        }
        windows
            .iter()
            .map(|w| {
                let norm = self.inner.predict_inputs_normalized(&w.inputs).map_err(to_py)?;
                Ok((w.forecast_date.to_string(), self.inner.scaler.inverse_close(norm)))
            })
            .collect()
    }
}

/// Cross-validates `config` on all but the most recent 10% of windows,
/// retrains on them and evaluates on the rest. Returns
/// `(model, metrics_report)`.
#[pyfunction]
#[pyo3(signature = (config, series, jobs = 1))]
fn train(py: Python<'_>, config: &PyTrainConfig, series: &PyPriceSeries, jobs: usize) -> PyResult<(PyTrainedModel, Py<PyAny>)> {
    let cfg = &config.inner;
    let windows = make_raw_windows(&series.inner, cfg.feature_set, cfg.window_len, 1).map_err(to_py)?;
    let (cv, test) = holdout_test_split(&windows, TEST_FRACTION).map_err(to_py)?;
    let arm = eval::run_arm(cfg, &cv, &test, jobs, None).map_err(to_py)?;
    let report = json_value(py, &arm.report)?;
    Ok((PyTrainedModel { inner: arm.final_model }, report))
}

/// LSTM vs GRU under identical pipelines; returns the comparison report.
/// `lambda_grid` chooses λ per cell by cross-validation.
#[pyfunction]
#[pyo3(signature = (config, series, jobs = 1, lambda_grid = None))]
fn compare(
    py: Python<'_>,
    config: &PyTrainConfig,
    series: &PyPriceSeries,
    jobs: usize,
    lambda_grid: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let cfg = &config.inner;
    let windows = make_raw_windows(&series.inner, cfg.feature_set, cfg.window_len, 1).map_err(to_py)?;
    let options = CompareOptions {
        test_fraction: TEST_FRACTION,
        jobs,
        lambda_grid,
    };
    let (report, _) = eval::compare_with(cfg, &windows, &options).map_err(to_py)?;
    json_value(py, &report)
}

/// Worst relative error between BPTT and central differences on a seeded
/// random instance.
#[pyfunction]
fn gradient_check(kind: &str, seed: u64, hidden_size: usize, input_size: usize, steps: usize) -> PyResult<f64> {
    Ok(cells::gradient_check(cell_kind(kind)?, seed, hidden_size, input_size, steps)
        .map_err(to_py)?
        .max_rel_error)
}

#[pyfunction]
fn lstm_param_count(hidden_size: usize, input_size: usize) -> usize {
    cells::lstm_param_count(hidden_size, input_size)
}

#[pyfunction]
fn gru_param_count(hidden_size: usize, input_size: usize) -> usize {
    cells::gru_param_count(hidden_size, input_size)
}

#[pymodule]
fn rnnfc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyPriceSeries>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyTrainedModel>()?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(lstm_param_count, m)?)?;
    m.add_function(wrap_pyfunction!(gru_param_count, m)?)?;
    Ok(())
}
