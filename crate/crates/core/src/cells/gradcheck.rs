//! Central finite-difference verification of the BPTT gradients.

use super::{backward_sequence, forward_sequence, CellKind, Params, TensorRole};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

const EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// max over entries of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
    pub max_rel_error: f64,
    /// Tensor holding the worst entry.
    pub worst_tensor: &'static str,
    pub entries_checked: usize,
}

fn squared_error(params: &Params, xs: &[Matrix], target: f64) -> Result<f64> {
    let pred = forward_sequence(params, xs, None)?.prediction;
    Ok((pred - target) * (pred - target))
}

/// Compares analytic and numeric gradients of `(prediction - target)²` for
/// every scalar parameter of `params`.
pub fn check_instance(params: &Params, xs: &[Matrix], target: f64) -> Result<GradientCheck> {
    let out = forward_sequence(params, xs, None)?;
    let analytic = backward_sequence(params, &out.caches, 2.0 * (out.prediction - target))?;

    let mut probe = params.clone();
    let mut report = GradientCheck {
        max_rel_error: 0.0,
        worst_tensor: "",
        entries_checked: 0,
    };
    let names: Vec<&'static str> = params.tensors().iter().map(|t| t.0).collect();
    for (t, name) in names.iter().enumerate() {
        let n = params.tensors()[t].2.len();
        for k in 0..n {
            let orig = params.tensors()[t].2.data()[k];
            probe.tensors_mut()[t].2.data_mut()[k] = orig + EPS;
            let plus = squared_error(&probe, xs, target)?;
            probe.tensors_mut()[t].2.data_mut()[k] = orig - EPS;
            let minus = squared_error(&probe, xs, target)?;
            probe.tensors_mut()[t].2.data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * EPS);
            let exact = analytic.tensors()[t].2.data()[k];
            let rel = (exact - numeric).abs() / (exact.abs() + numeric.abs()).max(1e-8);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_tensor = name;
            }
            report.entries_checked += 1;
        }
    }
    Ok(report)
}

/// Random instance: Xavier weights, biases in ±0.5, inputs and target in ±1.
pub fn random_instance(
    kind: CellKind,
    rng: &mut Rng,
    hidden_size: usize,
    input_size: usize,
    steps: usize,
) -> (Params, Vec<Matrix>, f64) {
    let mut params = Params::init(kind, hidden_size, input_size, rng);
    for (_, role, m) in params.tensors_mut() {
        if role == TensorRole::Bias {
            m.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
        }
    }
    let xs = (0..steps)
        .map(|_| {
            let v: Vec<f64> = (0..input_size).map(|_| rng.uniform(-1.0, 1.0)).collect();
            Matrix::column(&v)
        })
        .collect();
    let target = rng.uniform(-1.0, 1.0);
    (params, xs, target)
}

/// Builds a seeded random instance and returns the worst relative error
/// between BPTT and central differences (ε = 1e-5).
pub fn gradient_check(
    kind: CellKind,
    seed: u64,
    hidden_size: usize,
    input_size: usize,
    steps: usize,
) -> Result<GradientCheck> {
    if hidden_size == 0 || input_size == 0 || steps == 0 {
        return Err(Error::Argument(format!(
            "gradient_check sizes must be positive (hidden {hidden_size}, input {input_size}, steps {steps})"
        )));
    }
    let mut rng = Rng::new(seed);
    let (params, xs, target) = random_instance(kind, &mut rng, hidden_size, input_size, steps);
    check_instance(&params, &xs, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::GruParams;

    #[test]
    fn lstm_reference_instance() {
        let r = gradient_check(CellKind::Lstm, 1, 3, 2, 5).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(r.entries_checked, crate::cells::lstm_param_count(3, 2));
    }

    #[test]
    fn gru_reference_instance() {
        let r = gradient_check(CellKind::Gru, 2, 4, 1, 8).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn single_step_is_tight() {
        for kind in [CellKind::Lstm, CellKind::Gru] {
            let r = gradient_check(kind, 3, 3, 2, 1).unwrap();
            assert!(r.max_rel_error < 1e-6, "{kind}: {r:?}");
        }
    }

    #[test]
    fn gru_with_gate_biases() {
        let mut rng = Rng::new(12);
        let (params, xs, target) = random_instance(CellKind::Gru, &mut rng, 3, 2, 6);
        let Params::Gru(p) = params else { unreachable!() };
        let mut p: GruParams = p.with_bias();
        for b in [&mut p.b_z, &mut p.b_r, &mut p.b_h].into_iter().flatten() {
            b.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
        }
        let r = check_instance(&Params::Gru(p), &xs, target).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(gradient_check(CellKind::Lstm, 1, 0, 1, 1).is_err());
    }
}
