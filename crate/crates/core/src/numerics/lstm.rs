//! LSTM cell with gate order (input, forget, candidate, output):
//!
//! ```text
//! [i f g o] = [σ σ tanh σ](x·Wx + h_prev·Wh + b)
//! c = f⊙c_prev + i⊙g
//! h = o⊙tanh(c)
//! ```
//!
//! Batched steps take an optional per-row mask; masked rows carry the
//! previous state through unchanged, which is how padding is handled.

use rand::Rng;

use super::ops::sigmoid_scalar;
use super::tensor::{gemm, Scalar, Tensor};
use super::Parameter;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub w_x: Parameter<T>,
    pub w_h: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn new<R: Rng>(name: &str, input: usize, hidden: usize, range: f64, rng: &mut R) -> Self {
        LstmParams {
            w_x: Parameter::uniform(format!("{name}.w_x"), &[input, 4 * hidden], range, rng),
            w_h: Parameter::uniform(format!("{name}.w_h"), &[hidden, 4 * hidden], range, rng),
            bias: Parameter::uniform(format!("{name}.bias"), &[4 * hidden], range, rng),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_x.value.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.value.rows()
    }

    pub fn parameters(&self) -> [&Parameter<T>; 3] {
        [&self.w_x, &self.w_h, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter<T>; 3] {
        [&mut self.w_x, &mut self.w_h, &mut self.bias]
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    x: Tensor<T>,
    h_prev: Tensor<T>,
    c_prev: Tensor<T>,
    /// Post-activation gates `[i f g o]`, `[B × 4k]`.
    gates: Tensor<T>,
    tanh_c: Tensor<T>,
    mask: Option<Vec<T>>,
}

/// Unmasked single step.
pub fn lstm_cell<T: Scalar>(
    x: &Tensor<T>,
    h_prev: &Tensor<T>,
    c_prev: &Tensor<T>,
    params: &LstmParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (h, c, _) = lstm_forward(params, x, h_prev, c_prev, None)?;
    Ok((h, c))
}

pub fn lstm_forward<T: Scalar>(
    params: &LstmParams<T>,
    x: &Tensor<T>,
    h_prev: &Tensor<T>,
    c_prev: &Tensor<T>,
    mask: Option<&[T]>,
) -> Result<(Tensor<T>, Tensor<T>, LstmCache<T>)> {
    let k = params.hidden_size();
    let b = x.rows();
    if x.cols() != params.input_size()
        || h_prev.shape() != [b, k]
        || c_prev.shape() != [b, k]
        || mask.is_some_and(|m| m.len() != b)
    {
        return Err(Error::ShapeMismatch {
            op: "lstm",
            left: x.shape().to_vec(),
            right: vec![params.input_size(), k],
        });
    }
    let mut gates = Tensor::zeros(&[b, 4 * k]);
    for r in 0..b {
        gates.row_mut(r).copy_from_slice(params.bias.value.data());
    }
    gemm(
        T::one(),
        x,
        false,
        &params.w_x.value,
        false,
        T::one(),
        &mut gates,
    )?;
    gemm(
        T::one(),
        h_prev,
        false,
        &params.w_h.value,
        false,
        T::one(),
        &mut gates,
    )?;

    let mut h = Tensor::zeros(&[b, k]);
    let mut c = Tensor::zeros(&[b, k]);
    let mut tanh_c = Tensor::zeros(&[b, k]);
    for r in 0..b {
        let g = gates.row_mut(r);
        for j in 0..k {
            g[j] = sigmoid_scalar(g[j]);
            g[k + j] = sigmoid_scalar(g[k + j]);
            g[2 * k + j] = g[2 * k + j].tanh();
            g[3 * k + j] = sigmoid_scalar(g[3 * k + j]);
        }
        let (cp, hp) = (c_prev.row(r), h_prev.row(r));
        let m = mask.map_or(T::one(), |m| m[r]);
        let keep = T::one() - m;
        let g = gates.row(r);
        let tc = tanh_c.row_mut(r);
        let mut c_row = vec![T::zero(); k];
        let mut h_row = vec![T::zero(); k];
        for j in 0..k {
            let c_new = g[k + j] * cp[j] + g[j] * g[2 * k + j];
            tc[j] = c_new.tanh();
            let h_new = g[3 * k + j] * tc[j];
            c_row[j] = m * c_new + keep * cp[j];
            h_row[j] = m * h_new + keep * hp[j];
        }
        c.row_mut(r).copy_from_slice(&c_row);
        h.row_mut(r).copy_from_slice(&h_row);
    }
    let cache = LstmCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        gates,
        tanh_c,
        mask: mask.map(<[T]>::to_vec),
    };
    Ok((h, c, cache))
}

/// Backpropagates `dh`, `dc` (gradients on this step's outputs) through one
/// step, accumulating parameter gradients. Returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_backward<T: Scalar>(
    params: &mut LstmParams<T>,
    cache: &LstmCache<T>,
    dh: &Tensor<T>,
    dc: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let k = params.hidden_size();
    let b = cache.x.rows();
    let mut dgates = Tensor::zeros(&[b, 4 * k]);
    let mut dh_prev = Tensor::zeros(&[b, k]);
    let mut dc_prev = Tensor::zeros(&[b, k]);
    for r in 0..b {
        let m = cache.mask.as_ref().map_or(T::one(), |m| m[r]);
        let keep = T::one() - m;
        let g = cache.gates.row(r);
        let tc = cache.tanh_c.row(r);
        let cp = cache.c_prev.row(r);
        let (dh_r, dc_r) = (dh.row(r), dc.row(r));
        let mut dcp = vec![T::zero(); k];
        let mut dhp = vec![T::zero(); k];
        let dg = dgates.row_mut(r);
        for j in 0..k {
            let (i, f, gg, o) = (g[j], g[k + j], g[2 * k + j], g[3 * k + j]);
            let dh_new = m * dh_r[j];
            let dc_new = m * dc_r[j] + dh_new * o * (T::one() - tc[j] * tc[j]);
            let d_o = dh_new * tc[j];
            let d_i = dc_new * gg;
            let d_g = dc_new * i;
            let d_f = dc_new * cp[j];
            dg[j] = d_i * i * (T::one() - i);
            dg[k + j] = d_f * f * (T::one() - f);
            dg[2 * k + j] = d_g * (T::one() - gg * gg);
            dg[3 * k + j] = d_o * o * (T::one() - o);
            dcp[j] = dc_new * f + keep * dc_r[j];
            dhp[j] = keep * dh_r[j];
        }
        dc_prev.row_mut(r).copy_from_slice(&dcp);
        dh_prev.row_mut(r).copy_from_slice(&dhp);
    }
    gemm(
        T::one(),
        &cache.x,
        true,
        &dgates,
        false,
        T::one(),
        &mut params.w_x.grad,
    )?;
    gemm(
        T::one(),
        &cache.h_prev,
        true,
        &dgates,
        false,
        T::one(),
        &mut params.w_h.grad,
    )?;
    {
        let db = params.bias.grad.data_mut();
        for r in 0..b {
            for (a, &d) in db.iter_mut().zip(dgates.row(r)) {
                *a += d;
            }
        }
    }
    let mut dx = Tensor::zeros(&[b, params.input_size()]);
    gemm(
        T::one(),
        &dgates,
        false,
        &params.w_x.value,
        true,
        T::zero(),
        &mut dx,
    )?;
    gemm(
        T::one(),
        &dgates,
        false,
        &params.w_h.value,
        true,
        T::one(),
        &mut dh_prev,
    )?;
    Ok((dx, dh_prev, dc_prev))
}
