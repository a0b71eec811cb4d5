//! Gated recurrent unit.
//!
//! ```text
//! z_t = σ(W_z x_t + U_z h_{t-1})
//! r_t = σ(W_r x_t + U_r h_{t-1})
//! h̃_t = tanh(W x_t + U (r_t ⊙ h_{t-1}))
//! h_t = (1 - z_t) ⊙ h_{t-1} + z_t ⊙ h̃_t
//! ```
//!
//! Gate biases are absent unless the params were built with
//! [`GruParams::with_bias`].

use super::{affine, TensorRole};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, tanh_act, xavier_init, Matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub hidden_size: usize,
    pub input_size: usize,
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_z: Option<Matrix>,
    pub b_r: Option<Matrix>,
    pub b_h: Option<Matrix>,
    pub w_out: Matrix,
    pub b_out: Matrix,
}

impl GruParams {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let (h, d) = (hidden_size, input_size);
        Self {
            hidden_size,
            input_size,
            w_z: Matrix::zeros(h, d),
            u_z: Matrix::zeros(h, h),
            w_r: Matrix::zeros(h, d),
            u_r: Matrix::zeros(h, h),
            w_h: Matrix::zeros(h, d),
            u_h: Matrix::zeros(h, h),
            b_z: None,
            b_r: None,
            b_h: None,
            w_out: Matrix::zeros(1, h),
            b_out: Matrix::zeros(1, 1),
        }
    }

    /// Adds zero-initialized gate biases `b_z`, `b_r`, `b_h`.
    pub fn with_bias(mut self) -> Self {
        let h = self.hidden_size;
        self.b_z.get_or_insert_with(|| Matrix::zeros(h, 1));
        self.b_r.get_or_insert_with(|| Matrix::zeros(h, 1));
        self.b_h.get_or_insert_with(|| Matrix::zeros(h, 1));
        self
    }

    pub fn has_bias(&self) -> bool {
        self.b_z.is_some()
    }

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
        let mut out = vec![
            ("w_z", Weight, &self.w_z),
            ("u_z", Weight, &self.u_z),
            ("w_r", Weight, &self.w_r),
            ("u_r", Weight, &self.u_r),
            ("w_h", Weight, &self.w_h),
            ("u_h", Weight, &self.u_h),
        ];
        if let (Some(bz), Some(br), Some(bh)) = (&self.b_z, &self.b_r, &self.b_h) {
            out.extend([("b_z", Bias, bz), ("b_r", Bias, br), ("b_h", Bias, bh)]);
        }
        out.extend([("w_out", Weight, &self.w_out), ("b_out", Bias, &self.b_out)]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, TensorRole, &mut Matrix)> {
        use TensorRole::{Bias, Weight};
        let mut out = vec![
            ("w_z", Weight, &mut self.w_z),
            ("u_z", Weight, &mut self.u_z),
            ("w_r", Weight, &mut self.w_r),
            ("u_r", Weight, &mut self.u_r),
            ("w_h", Weight, &mut self.w_h),
            ("u_h", Weight, &mut self.u_h),
        ];
        if let (Some(bz), Some(br), Some(bh)) = (&mut self.b_z, &mut self.b_r, &mut self.b_h) {
            out.extend([("b_z", Bias, bz), ("b_r", Bias, br), ("b_h", Bias, bh)]);
        }
        out.extend([("w_out", Weight, &mut self.w_out), ("b_out", Bias, &mut self.b_out)]);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    pub x: Matrix,
    pub h_prev: Matrix,
    pub z: Matrix,
    pub r: Matrix,
    /// Candidate h̃_t.
    pub g: Matrix,
    pub h: Matrix,
}

pub fn gru_step(p: &GruParams, x: &Matrix, h_prev: &Matrix) -> Result<(Matrix, GruCache)> {
    let (h, d) = (p.hidden_size, p.input_size);
    if x.shape() != (d, 1) {
        return Err(Error::Shape(format!(
            "gru input is {}x{}, expected {d}x1",
            x.rows(),
            x.cols()
        )));
    }
    if h_prev.shape() != (h, 1) {
        return Err(Error::Shape(format!(
            "gru state is {}x{}, expected {h}x1",
            h_prev.rows(),
            h_prev.cols()
        )));
    }

    let z = sigmoid(&affine(&[(&p.w_z, x), (&p.u_z, h_prev)], p.b_z.as_ref())?);
    let r = sigmoid(&affine(&[(&p.w_r, x), (&p.u_r, h_prev)], p.b_r.as_ref())?);
    let rh = r.hadamard(h_prev)?;
    let g = tanh_act(&affine(&[(&p.w_h, x), (&p.u_h, &rh)], p.b_h.as_ref())?);
    let keep = z.zip_with(h_prev, "gru keep", |zi, hi| (1.0 - zi) * hi)?;
    let h_new = keep.add(&z.hadamard(&g)?)?;

    let cache = GruCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        z,
        r,
        g,
        h: h_new.clone(),
    };
    Ok((h_new, cache))
}

/// Reverse pass over one step; returns the gradient reaching `h_{t-1}`.
pub(crate) fn gru_step_backward(
    p: &GruParams,
    cache: &GruCache,
    dh: &Matrix,
    grads: &mut GruParams,
) -> Result<Matrix> {
    let (z, r, g, h_prev) = (&cache.z, &cache.r, &cache.g, &cache.h_prev);

    let da_z = dh
        .hadamard(&g.sub(h_prev)?)?
        .hadamard(&z.map(|v| v * (1.0 - v)))?;
    let da_g = dh.hadamard(z)?.hadamard(&g.map(|v| 1.0 - v * v))?;

    // reset path: h̃ sees r ⊙ h_{t-1} through U
    let d_rh = p.u_h.t_matmul(&da_g)?;
    let da_r = d_rh.hadamard(h_prev)?.hadamard(&r.map(|v| v * (1.0 - v)))?;

    let mut dh_prev = dh.zip_with(z, "gru backward", |d, zi| d * (1.0 - zi))?;
    dh_prev.axpy_assign(1.0, &d_rh.hadamard(r)?)?;
    dh_prev.axpy_assign(1.0, &p.u_z.t_matmul(&da_z)?)?;
    dh_prev.axpy_assign(1.0, &p.u_r.t_matmul(&da_r)?)?;

    let rh = r.hadamard(h_prev)?;
    let x = &cache.x;
    grads.w_z.add_outer_assign(&da_z, x)?;
    grads.u_z.add_outer_assign(&da_z, h_prev)?;
    grads.w_r.add_outer_assign(&da_r, x)?;
    grads.u_r.add_outer_assign(&da_r, h_prev)?;
    grads.w_h.add_outer_assign(&da_g, x)?;
    grads.u_h.add_outer_assign(&da_g, &rh)?;
    if let (Some(bz), Some(br), Some(bh)) = (&mut grads.b_z, &mut grads.b_r, &mut grads.b_h) {
        bz.axpy_assign(1.0, &da_z)?;
        br.axpy_assign(1.0, &da_r)?;
        bh.axpy_assign(1.0, &da_g)?;
    }

    Ok(dh_prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_halve_the_state() {
        let p = GruParams::zeros(3, 2);
        let h_prev = Matrix::column(&[0.4, -0.2, 0.9]);
        let (h, cache) = gru_step(&p, &Matrix::column(&[1.0, 2.0]), &h_prev).unwrap();
        assert!(cache.z.data().iter().all(|&v| v == 0.5));
        assert!(cache.r.data().iter().all(|&v| v == 0.5));
        assert!(cache.g.data().iter().all(|&v| v == 0.0));
        for (a, b) in h.data().iter().zip(h_prev.data()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn update_gate_endpoints() {
        let mut p = GruParams::zeros(2, 1).with_bias();
        p.w_h = Matrix::column(&[0.8, -0.5]);
        let x = Matrix::column(&[1.0]);
        let h_prev = Matrix::column(&[0.3, 0.6]);

        p.b_z = Some(Matrix::filled(2, 1, 50.0));
        let (h, cache) = gru_step(&p, &x, &h_prev).unwrap();
        for (a, b) in h.data().iter().zip(cache.g.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        p.b_z = Some(Matrix::filled(2, 1, -50.0));
        let (h, _) = gru_step(&p, &x, &h_prev).unwrap();
        for (a, b) in h.data().iter().zip(h_prev.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_tensors_only_when_enabled() {
        assert_eq!(GruParams::zeros(2, 1).tensors().len(), 8);
        assert_eq!(GruParams::zeros(2, 1).with_bias().tensors().len(), 11);
    }

    #[test]
    fn rejects_wrong_state_shape() {
        let p = GruParams::zeros(2, 1);
        let err = gru_step(&p, &Matrix::column(&[1.0]), &Matrix::zeros(3, 1)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }
}
