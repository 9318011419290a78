use rand::Rng;

use super::tensor::{gemm, Scalar, Tensor};
use super::{sc, Parameter};
use crate::{Error, Result};

/// `x · W + b` for `x: [n × in]`, `W: [in × out]`, `b: [out]`.
pub fn affine<T: Scalar>(x: &Tensor<T>, w: &Parameter<T>, b: &Parameter<T>) -> Result<Tensor<T>> {
    let out = w.value.cols();
    if x.cols() != w.value.rows() || b.value.len() != out {
        return Err(Error::ShapeMismatch {
            op: "affine",
            left: x.shape().to_vec(),
            right: w.value.shape().to_vec(),
        });
    }
    let mut y = Tensor::zeros(&[x.rows(), out]);
    for r in 0..x.rows() {
        y.row_mut(r).copy_from_slice(b.value.data());
    }
    gemm(T::one(), x, false, &w.value, false, T::one(), &mut y)?;
    y.check_finite("affine")?;
    Ok(y)
}

/// Accumulates `dW`, `db` and returns `dx`.
pub fn affine_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &mut Parameter<T>,
    b: &mut Parameter<T>,
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    gemm(T::one(), x, true, dy, false, T::one(), &mut w.grad)?;
    let db = b.grad.data_mut();
    for r in 0..dy.rows() {
        for (g, &d) in db.iter_mut().zip(dy.row(r)) {
            *g += d;
        }
    }
    let mut dx = Tensor::zeros(&[x.rows(), x.cols()]);
    gemm(T::one(), dy, false, &w.value, true, T::zero(), &mut dx)?;
    Ok(dx)
}

#[inline]
pub(crate) fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn tanh<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

/// Numerically stable softmax of one row.
pub fn softmax_row<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let z: T = out.iter().copied().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

pub fn log_softmax_row<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + x.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    x.iter().map(|&v| v - lse).collect()
}

/// Row-wise softmax over the last dimension.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.check_finite("softmax input")?;
    let mut y = x.clone();
    for r in 0..x.rows() {
        let s = softmax_row(x.row(r));
        y.row_mut(r).copy_from_slice(&s);
    }
    Ok(y)
}

/// `-log softmax(logits)[target]`.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> Result<T> {
    if target >= logits.len() {
        return Err(Error::TargetOutOfRange {
            target,
            classes: logits.len(),
        });
    }
    Ok(-log_softmax_row(logits)[target])
}

/// Loss and its gradient with respect to the logits (`softmax - onehot`).
pub fn cross_entropy_grad<T: Scalar>(logits: &[T], target: usize) -> Result<(T, Vec<T>)> {
    let loss = cross_entropy(logits, target)?;
    let mut g = softmax_row(logits);
    g[target] -= T::one();
    Ok((loss, g))
}

/// Summed cross-entropy over rows whose weight is non-zero; writes
/// `weight * scale * (softmax - onehot)` into the returned gradient.
pub fn softmax_cross_entropy_batch<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    weights: &[T],
    scale: T,
) -> Result<(f64, Tensor<T>)> {
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    for r in 0..logits.rows() {
        if weights[r] == T::zero() {
            continue;
        }
        let (loss, g) = cross_entropy_grad(logits.row(r), targets[r])?;
        total += loss.to_f64().unwrap() * weights[r].to_f64().unwrap();
        let k = weights[r] * scale;
        for (o, v) in grad.row_mut(r).iter_mut().zip(g) {
            *o = v * k;
        }
    }
    Ok((total, grad))
}

/// Inverted dropout: survivors are scaled by `1/(1-rate)` during training;
/// identity at inference. Returns the applied mask when one was drawn.
pub fn dropout<T: Scalar, R: Rng>(
    x: &Tensor<T>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} not in [0, 1)"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep: T = sc(1.0 / (1.0 - rate));
    let mut mask = Tensor::zeros(x.shape());
    for m in mask.data_mut() {
        if rng.gen::<f64>() >= rate {
            *m = keep;
        }
    }
    let mut y = x.clone();
    for (v, &m) in y.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    Ok((y, Some(mask)))
}
