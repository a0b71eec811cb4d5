//! Recurrent cells, sequence unrolling and backpropagation through time.

mod format;
mod gradcheck;
mod gru;
mod lstm;

use serde::{Deserialize, Serialize};

pub use format::ParamsDocument;
pub use gradcheck::{gradient_check, GradientCheck};
pub use gru::{gru_step, GruCache, GruParams};
pub use lstm::{lstm_step, LstmCache, LstmParams, LstmState};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::Argument(format!("unknown cell kind `{other}` (expected lstm or gru)"))),
        }
    }
}

/// Whether a tensor counts toward the L2 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Weight,
    Bias,
}

/// Parameters of either cell plus the scalar output head.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Lstm(LstmParams),
    Gru(GruParams),
}

/// Gradients share the parameter layout tensor for tensor.
pub type Gradients = Params;

impl Params {
    /// Xavier-initialized weights and zero biases.
    pub fn init(kind: CellKind, hidden_size: usize, input_size: usize, rng: &mut Rng) -> Self {
        match kind {
            CellKind::Lstm => Params::Lstm(LstmParams::init(hidden_size, input_size, rng)),
            CellKind::Gru => Params::Gru(GruParams::init(hidden_size, input_size, rng)),
        }
    }

    pub fn zeros(kind: CellKind, hidden_size: usize, input_size: usize) -> Self {
        match kind {
            CellKind::Lstm => Params::Lstm(LstmParams::zeros(hidden_size, input_size)),
            CellKind::Gru => Params::Gru(GruParams::zeros(hidden_size, input_size)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            Params::Lstm(_) => CellKind::Lstm,
            Params::Gru(_) => CellKind::Gru,
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            Params::Lstm(p) => p.hidden_size,
            Params::Gru(p) => p.hidden_size,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            Params::Lstm(p) => p.input_size,
            Params::Gru(p) => p.input_size,
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, TensorRole, &Matrix)> {
        match self {
            Params::Lstm(p) => p.tensors(),
            Params::Gru(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, TensorRole, &mut Matrix)> {
        match self {
            Params::Lstm(p) => p.tensors_mut(),
            Params::Gru(p) => p.tensors_mut(),
        }
    }

    /// Same layout, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, _, m) in out.tensors_mut() {
            m.fill(0.0);
        }
        out
    }

    /// Exact number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, m)| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, m)| m.is_finite())
    }

    /// Checks that `other` has the same cell kind and tensor shapes.
    pub fn check_congruent(&self, other: &Params) -> Result<()> {
        let a = self.tensors();
        let b = other.tensors();
        if self.kind() != other.kind() || a.len() != b.len() {
            return Err(Error::Structure(format!(
                "{} params with {} tensors vs {} params with {} tensors",
                self.kind(),
                a.len(),
                other.kind(),
                b.len()
            )));
        }
        for ((na, _, ma), (nb, _, mb)) in a.iter().zip(&b) {
            if na != nb || ma.shape() != mb.shape() {
                return Err(Error::Structure(format!(
                    "tensor {na} {:?} vs {nb} {:?}",
                    ma.shape(),
                    mb.shape()
                )));
            }
        }
        Ok(())
    }

    /// `self += factor * other`, tensor by tensor.
    pub fn axpy_assign(&mut self, factor: f64, other: &Params) -> Result<()> {
        self.check_congruent(other)?;
        for ((_, _, a), (_, _, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy_assign(factor, b)?;
        }
        Ok(())
    }

    fn output_head(&self) -> (&Matrix, &Matrix) {
        match self {
            Params::Lstm(p) => (&p.w_out, &p.b_out),
            Params::Gru(p) => (&p.w_out, &p.b_out),
        }
    }
}

/// Closed-form parameter count for an LSTM of the given size.
pub fn lstm_param_count(hidden: usize, input: usize) -> usize {
    4 * hidden * input + 4 * hidden * hidden + 3 * hidden * hidden + 4 * hidden + hidden + 1
}

/// Closed-form parameter count for a bias-free GRU of the given size.
pub fn gru_param_count(hidden: usize, input: usize) -> usize {
    3 * hidden * input + 3 * hidden * hidden + hidden + 1
}

pub fn param_count(params: &Params) -> usize {
    params.param_count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrentState {
    Lstm(LstmState),
    Gru(Matrix),
}

impl RecurrentState {
    pub fn zeros(kind: CellKind, hidden_size: usize) -> Self {
        match kind {
            CellKind::Lstm => RecurrentState::Lstm(LstmState::zeros(hidden_size)),
            CellKind::Gru => RecurrentState::Gru(Matrix::zeros(hidden_size, 1)),
        }
    }

    pub fn hidden(&self) -> &Matrix {
        match self {
            RecurrentState::Lstm(s) => &s.h,
            RecurrentState::Gru(h) => h,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepCache {
    Lstm(LstmCache),
    Gru(GruCache),
}

impl StepCache {
    pub fn hidden(&self) -> &Matrix {
        match self {
            StepCache::Lstm(c) => &c.h,
            StepCache::Gru(c) => &c.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutput {
    pub final_state: RecurrentState,
    pub caches: Vec<StepCache>,
    pub prediction: f64,
}

/// Sum of `W v` products plus an optional bias, all as column vectors.
pub(crate) fn affine(terms: &[(&Matrix, &Matrix)], bias: Option<&Matrix>) -> Result<Matrix> {
    let mut iter = terms.iter();
    let (w, v) = iter.next().expect("affine needs at least one term");
    let mut acc = w.matmul(v)?;
    for (w, v) in iter {
        acc.axpy_assign(1.0, &w.matmul(v)?)?;
    }
    if let Some(b) = bias {
        acc.axpy_assign(1.0, b)?;
    }
    Ok(acc)
}

/// Unrolls the cell over `xs` and projects the last hidden state to a scalar.
///
/// `initial` defaults to zero state.
pub fn forward_sequence(
    params: &Params,
    xs: &[Matrix],
    initial: Option<&RecurrentState>,
) -> Result<SequenceOutput> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("forward_sequence needs at least one step".into()));
    }
    let mut state = match initial {
        Some(s) => s.clone(),
        None => RecurrentState::zeros(params.kind(), params.hidden_size()),
    };
    let mut caches = Vec::with_capacity(xs.len());
    for x in xs {
        state = match (params, state) {
            (Params::Lstm(p), RecurrentState::Lstm(s)) => {
                let (next, cache) = lstm_step(p, x, &s)?;
                caches.push(StepCache::Lstm(cache));
                RecurrentState::Lstm(next)
            }
            (Params::Gru(p), RecurrentState::Gru(h)) => {
                let (next, cache) = gru_step(p, x, &h)?;
                caches.push(StepCache::Gru(cache));
                RecurrentState::Gru(next)
            }
            (p, _) => {
                return Err(Error::Structure(format!(
                    "initial state does not match {} params",
                    p.kind()
                )))
            }
        };
    }
    let (w_out, b_out) = params.output_head();
    let prediction = w_out.matmul(state.hidden())?.get(0, 0) + b_out.get(0, 0);
    Ok(SequenceOutput {
        final_state: state,
        caches,
        prediction,
    })
}

/// Prediction only, discarding caches.
pub fn predict(params: &Params, xs: &[Matrix]) -> Result<f64> {
    Ok(forward_sequence(params, xs, None)?.prediction)
}

/// Exact gradients of the prediction scaled by `d_prediction`.
pub fn backward_sequence(params: &Params, caches: &[StepCache], d_prediction: f64) -> Result<Gradients> {
    let mut grads = params.zeros_like();
    accumulate_backward(params, caches, d_prediction, &mut grads)?;
    Ok(grads)
}

/// Like [`backward_sequence`] but adds into an existing gradient buffer.
pub fn accumulate_backward(
    params: &Params,
    caches: &[StepCache],
    d_prediction: f64,
    grads: &mut Gradients,
) -> Result<()> {
    let last = caches
        .last()
        .ok_or_else(|| Error::Structure("backward_sequence called with no caches".into()))?;
    params.check_congruent(grads)?;
    let h = params.hidden_size();
    if last.hidden().shape() != (h, 1) {
        return Err(Error::Structure(format!(
            "cache hidden state is {:?}, params expect {h}x1",
            last.hidden().shape()
        )));
    }

    match (params, grads) {
        (Params::Lstm(p), Params::Lstm(g)) => {
            g.b_out.data_mut()[0] += d_prediction;
            g.w_out.axpy_assign(d_prediction, &last.hidden().transpose())?;
            let mut dh = p.w_out.transpose().scale(d_prediction);
            let mut dc = Matrix::zeros(h, 1);
            for cache in caches.iter().rev() {
                let StepCache::Lstm(cache) = cache else {
                    return Err(Error::Structure("GRU cache passed to LSTM backward".into()));
                };
                let (dh_prev, dc_prev) = lstm::lstm_step_backward(p, cache, &dh, &dc, g)?;
                dh = dh_prev;
                dc = dc_prev;
            }
        }
        (Params::Gru(p), Params::Gru(g)) => {
            g.b_out.data_mut()[0] += d_prediction;
            g.w_out.axpy_assign(d_prediction, &last.hidden().transpose())?;
            let mut dh = p.w_out.transpose().scale(d_prediction);
            for cache in caches.iter().rev() {
                let StepCache::Gru(cache) = cache else {
                    return Err(Error::Structure("LSTM cache passed to GRU backward".into()));
                };
                dh = gru::gru_step_backward(p, cache, &dh, g)?;
            }
        }
        _ => unreachable!("congruence checked above"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(n: usize, d: usize, rng: &mut Rng) -> Vec<Matrix> {
        (0..n)
            .map(|_| Matrix::column(&(0..d).map(|_| rng.uniform(-1.0, 1.0)).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn closed_form_counts_match_tensor_enumeration() {
        for h in 1..6 {
            for d in 1..4 {
                let lstm = Params::zeros(CellKind::Lstm, h, d);
                let gru = Params::zeros(CellKind::Gru, h, d);
                assert_eq!(param_count(&lstm), lstm_param_count(h, d));
                assert_eq!(param_count(&gru), gru_param_count(h, d));
                assert!(param_count(&gru) < param_count(&lstm));
            }
        }
        assert_eq!(lstm_param_count(2, 1), 47);
        assert_eq!(gru_param_count(2, 1), 21);
    }

    #[test]
    fn zero_params_predict_output_bias() {
        for kind in [CellKind::Lstm, CellKind::Gru] {
            let mut p = Params::zeros(kind, 4, 2);
            match &mut p {
                Params::Lstm(p) => p.b_out.set(0, 0, 0.37),
                Params::Gru(p) => p.b_out.set(0, 0, 0.37),
            }
            let xs = inputs(5, 2, &mut Rng::new(1));
            assert_eq!(forward_sequence(&p, &xs, None).unwrap().prediction, 0.37);
        }
    }

    #[test]
    fn single_step_is_step_plus_projection() {
        let mut rng = Rng::new(4);
        let params = Params::init(CellKind::Lstm, 3, 2, &mut rng);
        let xs = inputs(1, 2, &mut rng);
        let out = forward_sequence(&params, &xs, None).unwrap();
        let Params::Lstm(p) = &params else { unreachable!() };
        let (s, _) = lstm_step(p, &xs[0], &LstmState::zeros(3)).unwrap();
        let expected = p.w_out.matmul(&s.h).unwrap().get(0, 0) + p.b_out.get(0, 0);
        assert_eq!(out.prediction, expected);
        assert_eq!(out.caches.len(), 1);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let p = Params::zeros(CellKind::Gru, 2, 1);
        assert!(matches!(forward_sequence(&p, &[], None), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn backward_output_head_and_linearity() {
        let mut rng = Rng::new(8);
        for kind in [CellKind::Lstm, CellKind::Gru] {
            let params = Params::init(kind, 3, 2, &mut rng);
            let xs = inputs(4, 2, &mut rng);
            let out = forward_sequence(&params, &xs, None).unwrap();

            let zero = backward_sequence(&params, &out.caches, 0.0).unwrap();
            assert!(zero.tensors().iter().all(|(_, _, m)| m.data().iter().all(|&v| v == 0.0)));

            let d = 0.75;
            let g = backward_sequence(&params, &out.caches, d).unwrap();
            let tensors = g.tensors();
            let b_out = tensors.iter().find(|t| t.0 == "b_out").unwrap().2;
            let w_out = tensors.iter().find(|t| t.0 == "w_out").unwrap().2;
            assert_eq!(b_out.get(0, 0), d);
            assert_eq!(w_out, &out.final_state.hidden().transpose().scale(d));
        }
    }

    #[test]
    fn backward_rejects_mismatched_caches() {
        let mut rng = Rng::new(2);
        let lstm = Params::init(CellKind::Lstm, 2, 1, &mut rng);
        let gru = Params::init(CellKind::Gru, 2, 1, &mut rng);
        let xs = inputs(3, 1, &mut rng);
        let out = forward_sequence(&lstm, &xs, None).unwrap();
        assert!(matches!(backward_sequence(&gru, &out.caches, 1.0), Err(Error::Structure(_))));
        assert!(matches!(backward_sequence(&lstm, &[], 1.0), Err(Error::Structure(_))));
        let bigger = Params::init(CellKind::Lstm, 3, 1, &mut rng);
        assert!(backward_sequence(&bigger, &out.caches, 1.0).is_err());
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut rng = Rng::new(21);
        let params = Params::init(CellKind::Gru, 5, 3, &mut rng);
        let xs = inputs(8, 3, &mut rng);
        let a = forward_sequence(&params, &xs, None).unwrap();
        let b = forward_sequence(&params, &xs, None).unwrap();
        assert_eq!(a.prediction.to_bits(), b.prediction.to_bits());
        assert_eq!(a, b);
    }
}
