//! Peephole LSTM with full-matrix cell-state connections.
//!
//! ```text
//! i_t  = σ(W_xi x_t + W_hi h_{t-1} + W_ci c_{t-1} + b_i)
//! f_t  = σ(W_xf x_t + W_hf h_{t-1} + W_cf c_{t-1} + b_f)
//! c̃_t  = tanh(W_xc x_t + W_hc h_{t-1} + b_c)
//! c_t  = f_t ⊙ c_{t-1} + i_t ⊙ c̃_t
//! o_t  = σ(W_xo x_t + W_ho h_{t-1} + W_co c_t + b_o)
//! h_t  = o_t ⊙ tanh(c_t)
//! ```
//!
//! The output gate peeks at the updated cell state `c_t`, so in the backward
//! pass the output-gate pre-activation feeds gradient into `c_t` through
//! `W_coᵀ` before it is split across the forget and input paths.

use serde::{Deserialize, Serialize};

use super::{affine, TensorRole};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, tanh_act, xavier_init, Matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub hidden_size: usize,
    pub input_size: usize,
    pub w_xi: Matrix,
    pub w_hi: Matrix,
    pub w_ci: Matrix,
    pub b_i: Matrix,
    pub w_xf: Matrix,
    pub w_hf: Matrix,
    pub w_cf: Matrix,
    pub b_f: Matrix,
    pub w_xc: Matrix,
    pub w_hc: Matrix,
    pub b_c: Matrix,
    pub w_xo: Matrix,
    pub w_ho: Matrix,
    pub w_co: Matrix,
    pub b_o: Matrix,
    pub w_out: Matrix,
    pub b_out: Matrix,
}

impl LstmParams {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let (h, d) = (hidden_size, input_size);
        Self {
            hidden_size,
            input_size,
            w_xi: Matrix::zeros(h, d),
            w_hi: Matrix::zeros(h, h),
            w_ci: Matrix::zeros(h, h),
            b_i: Matrix::zeros(h, 1),
            w_xf: Matrix::zeros(h, d),
            w_hf: Matrix::zeros(h, h),
            w_cf: Matrix::zeros(h, h),
            b_f: Matrix::zeros(h, 1),
            w_xc: Matrix::zeros(h, d),
            w_hc: Matrix::zeros(h, h),
            b_c: Matrix::zeros(h, 1),
            w_xo: Matrix::zeros(h, d),
            w_ho: Matrix::zeros(h, h),
            w_co: Matrix::zeros(h, h),
            b_o: Matrix::zeros(h, 1),
            w_out: Matrix::zeros(1, h),
            b_out: Matrix::zeros(1, 1),
        }
    }

    /// Xavier-uniform weights, zero biases. Draw order follows [`Self::tensors`].
    pub fn init(hidden_size: usize, input_size: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(hidden_size, input_size);
        for (_, role, m) in p.tensors_mut() {
            if role == TensorRole::Weight {
                *m = xavier_init(m.rows(), m.cols(), rng);
            }
        }
        p
    }

    pub fn tensors(&self) -> Vec<(&'static str, TensorRole, &Matrix)> {
        use TensorRole::{Bias, Weight};
        vec![
            ("w_xi", Weight, &self.w_xi),
            ("w_hi", Weight, &self.w_hi),
            ("w_ci", Weight, &self.w_ci),
            ("b_i", Bias, &self.b_i),
            ("w_xf", Weight, &self.w_xf),
            ("w_hf", Weight, &self.w_hf),
            ("w_cf", Weight, &self.w_cf),
            ("b_f", Bias, &self.b_f),
            ("w_xc", Weight, &self.w_xc),
            ("w_hc", Weight, &self.w_hc),
            ("b_c", Bias, &self.b_c),
            ("w_xo", Weight, &self.w_xo),
            ("w_ho", Weight, &self.w_ho),
            ("w_co", Weight, &self.w_co),
            ("b_o", Bias, &self.b_o),
            ("w_out", Weight, &self.w_out),
            ("b_out", Bias, &self.b_out),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, TensorRole, &mut Matrix)> {
        use TensorRole::{Bias, Weight};
        vec![
            ("w_xi", Weight, &mut self.w_xi),
            ("w_hi", Weight, &mut self.w_hi),
            ("w_ci", Weight, &mut self.w_ci),
            ("b_i", Bias, &mut self.b_i),
            ("w_xf", Weight, &mut self.w_xf),
            ("w_hf", Weight, &mut self.w_hf),
            ("w_cf", Weight, &mut self.w_cf),
            ("b_f", Bias, &mut self.b_f),
            ("w_xc", Weight, &mut self.w_xc),
            ("w_hc", Weight, &mut self.w_hc),
            ("b_c", Bias, &mut self.b_c),
            ("w_xo", Weight, &mut self.w_xo),
            ("w_ho", Weight, &mut self.w_ho),
            ("w_co", Weight, &mut self.w_co),
            ("b_o", Bias, &mut self.b_o),
            ("w_out", Weight, &mut self.w_out),
            ("b_out", Bias, &mut self.b_out),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub h: Matrix,
    pub c: Matrix,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            h: Matrix::zeros(hidden_size, 1),
            c: Matrix::zeros(hidden_size, 1),
        }
    }
}

/// Activations retained from one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache {
    pub x: Matrix,
    pub h_prev: Matrix,
    pub c_prev: Matrix,
    pub i: Matrix,
    pub f: Matrix,
    pub o: Matrix,
    /// Candidate c̃_t.
    pub g: Matrix,
    pub c: Matrix,
    pub h: Matrix,
}

pub fn lstm_step(p: &LstmParams, x: &Matrix, s: &LstmState) -> Result<(LstmState, LstmCache)> {
    let (h, d) = (p.hidden_size, p.input_size);
    if x.shape() != (d, 1) {
        return Err(Error::Shape(format!(
            "lstm input is {}x{}, expected {d}x1",
            x.rows(),
            x.cols()
        )));
    }
    if s.h.shape() != (h, 1) || s.c.shape() != (h, 1) {
        return Err(Error::Shape(format!(
            "lstm state is h {}x{}, c {}x{}; expected {h}x1",
            s.h.rows(),
            s.h.cols(),
            s.c.rows(),
            s.c.cols()
        )));
    }

    let i = sigmoid(&affine(&[(&p.w_xi, x), (&p.w_hi, &s.h), (&p.w_ci, &s.c)], Some(&p.b_i))?);
    let f = sigmoid(&affine(&[(&p.w_xf, x), (&p.w_hf, &s.h), (&p.w_cf, &s.c)], Some(&p.b_f))?);
    let g = tanh_act(&affine(&[(&p.w_xc, x), (&p.w_hc, &s.h)], Some(&p.b_c))?);
    let c = f.hadamard(&s.c)?.add(&i.hadamard(&g)?)?;
    let o = sigmoid(&affine(&[(&p.w_xo, x), (&p.w_ho, &s.h), (&p.w_co, &c)], Some(&p.b_o))?);
    let h_new = o.hadamard(&tanh_act(&c))?;

    let cache = LstmCache {
        x: x.clone(),
        h_prev: s.h.clone(),
        c_prev: s.c.clone(),
        i,
        f,
        o,
        g,
        c: c.clone(),
        h: h_new.clone(),
    };
    Ok((LstmState { h: h_new, c }, cache))
}

/// Reverse pass over one step.
///
/// `dh` is the total gradient reaching `h_t`, `dc_next` the gradient reaching
/// `c_t` from step `t+1`. Parameter gradients are accumulated into `grads`;
/// returns the gradients flowing into `(h_{t-1}, c_{t-1})`.
pub(crate) fn lstm_step_backward(
    p: &LstmParams,
    cache: &LstmCache,
    dh: &Matrix,
    dc_next: &Matrix,
    grads: &mut LstmParams,
) -> Result<(Matrix, Matrix)> {
    let tc = tanh_act(&cache.c);

    // output gate
    let da_o = dh
        .hadamard(&tc)?
        .hadamard(&cache.o.map(|o| o * (1.0 - o)))?;

    // c_t receives: carry from t+1, the tanh path into h_t, and the W_co peephole
    let dc = dc_next
        .add(&dh.hadamard(&cache.o)?.hadamard(&tc.map(|t| 1.0 - t * t))?)?
        .add(&p.w_co.t_matmul(&da_o)?)?;

    let da_i = dc.hadamard(&cache.g)?.hadamard(&cache.i.map(|v| v * (1.0 - v)))?;
    let da_g = dc.hadamard(&cache.i)?.hadamard(&cache.g.map(|v| 1.0 - v * v))?;
    let da_f = dc.hadamard(&cache.c_prev)?.hadamard(&cache.f.map(|v| v * (1.0 - v)))?;

    let mut dc_prev = dc.hadamard(&cache.f)?;
    dc_prev.axpy_assign(1.0, &p.w_ci.t_matmul(&da_i)?)?;
    dc_prev.axpy_assign(1.0, &p.w_cf.t_matmul(&da_f)?)?;

    let mut dh_prev = p.w_hi.t_matmul(&da_i)?;
    dh_prev.axpy_assign(1.0, &p.w_hf.t_matmul(&da_f)?)?;
    dh_prev.axpy_assign(1.0, &p.w_hc.t_matmul(&da_g)?)?;
    dh_prev.axpy_assign(1.0, &p.w_ho.t_matmul(&da_o)?)?;

    let (x, h_prev, c_prev) = (&cache.x, &cache.h_prev, &cache.c_prev);
    grads.w_xi.add_outer_assign(&da_i, x)?;
    grads.w_hi.add_outer_assign(&da_i, h_prev)?;
    grads.w_ci.add_outer_assign(&da_i, c_prev)?;
    grads.b_i.axpy_assign(1.0, &da_i)?;

    grads.w_xf.add_outer_assign(&da_f, x)?;
    grads.w_hf.add_outer_assign(&da_f, h_prev)?;
    grads.w_cf.add_outer_assign(&da_f, c_prev)?;
    grads.b_f.axpy_assign(1.0, &da_f)?;

    grads.w_xc.add_outer_assign(&da_g, x)?;
    grads.w_hc.add_outer_assign(&da_g, h_prev)?;
    grads.b_c.axpy_assign(1.0, &da_g)?;

    grads.w_xo.add_outer_assign(&da_o, x)?;
    grads.w_ho.add_outer_assign(&da_o, h_prev)?;
    grads.w_co.add_outer_assign(&da_o, &cache.c)?;
    grads.b_o.axpy_assign(1.0, &da_o)?;

    Ok((dh_prev, dc_prev))
}
