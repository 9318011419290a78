//! Dense tensors with hand-derived gradients for the layers used by the
//! translation model and the probe.

mod gradcheck;
mod lstm;
mod ops;
mod optim;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport, REL_ERROR_FLOOR};
pub use lstm::{lstm_backward, lstm_cell, lstm_forward, LstmCache, LstmParams};
pub use ops::{
    affine, affine_backward, cross_entropy, cross_entropy_grad, dropout, log_softmax_row, sigmoid,
    softmax, softmax_cross_entropy_batch, softmax_row, tanh,
};
pub use optim::{clip_global_norm, sgd_step, Adam, SgdSchedule};
pub use tensor::{gemm, matmul, Scalar, Tensor};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Default half-width of the uniform initialization range.
pub const INIT_RANGE: f64 = 0.1;

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    /// Draws every entry from U(-range, range).
    pub fn uniform<R: Rng>(
        name: impl Into<String>,
        shape: &[usize],
        range: f64,
        rng: &mut R,
    ) -> Self {
        Parameter::new(name, Tensor::uniform(shape, -range, range, rng))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Scalar>(&self) -> Parameter<U> {
        Parameter::new(self.name.clone(), self.value.cast())
    }
}

/// Models expose their parameters in a fixed order; optimizers, checkpoints
/// and gradient checks all rely on that order.
pub trait Parameterized<T: Scalar> {
    fn parameters(&self) -> Vec<&Parameter<T>>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>>;

    fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    /// FNV-1a over the bit patterns of every parameter value.
    fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.parameters() {
            for &v in p.value.data() {
                for b in v.to_bits_u64().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

#[inline]
pub(crate) fn sc<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}
