use super::tensor::{Scalar, Tensor};
use super::{sc, Parameter};

/// Learning rate `lr0 · decay^max(0, epoch - decay_start_epoch)` with
/// 1-based epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSchedule {
    pub lr0: f64,
    pub decay: f64,
    pub decay_start_epoch: usize,
}

impl Default for SgdSchedule {
    fn default() -> Self {
        SgdSchedule {
            lr0: 1.0,
            decay: 0.5,
            decay_start_epoch: 9,
        }
    }
}

impl SgdSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.lr0
            * self
                .decay
                .powi(epoch.saturating_sub(self.decay_start_epoch) as i32)
    }
}

pub fn sgd_step<T: Scalar>(params: &mut [&mut Parameter<T>], lr: f64) {
    let lr: T = sc(lr);
    for p in params.iter_mut() {
        let Parameter { value, grad, .. } = &mut **p;
        for (v, &g) in value.data_mut().iter_mut().zip(grad.data()) {
            *v -= lr * g;
        }
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(params: &mut [&mut Parameter<T>], max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .map(|p| p.grad.sum_squares())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s: T = sc(max_norm / norm);
        for p in params.iter_mut() {
            p.grad.scale(s);
        }
    }
    norm
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Parameter<T>]) {
        if self.m.is_empty() {
            self.m = params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect();
            self.v = self.m.clone();
        }
        assert_eq!(
            self.m.len(),
            params.len(),
            "parameter list changed between steps"
        );
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1: T = sc(1.0 - b1.powi(t));
        let c2: T = sc(1.0 - b2.powi(t));
        let (b1, b2, lr, eps): (T, T, T, T) = (sc(b1), sc(b2), sc(self.lr), sc(self.eps));
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Parameter { value, grad, .. } = &mut **p;
            for (((w, &g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(vals: Vec<f64>) -> Parameter<f64> {
        let n = vals.len();
        Parameter::new("p", Tensor::from_vec(&[n], vals).unwrap())
    }

    #[test]
    fn decay_after_ninth_epoch() {
        let s = SgdSchedule::default();
        let lrs: Vec<f64> = (1..=12).map(|e| s.lr(e)).collect();
        assert_eq!(&lrs[..9], &[1.0; 9]);
        assert_eq!(&lrs[8..11], &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = param(vec![0.3, -0.7]);
        sgd_step(&mut [&mut p], 1.0);
        assert_eq!(p.value.data(), &[0.3, -0.7]);
        let mut adam = Adam::new(1e-3);
        adam.step(&mut [&mut p]);
        assert_eq!(p.value.data(), &[0.3, -0.7]);
    }

    #[test]
    fn first_adam_step_is_lr_times_sign() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps) ≈ lr·sign(g)
        let mut p = param(vec![1.0, 1.0, 1.0]);
        p.grad = Tensor::from_vec(&[3], vec![0.5, -2.0, 1e-3]).unwrap();
        let mut adam = Adam::new(0.01);
        adam.step(&mut [&mut p]);
        let d: Vec<f64> = p.value.data().iter().map(|w| w - 1.0).collect();
        assert!((d[0] + 0.01).abs() < 1e-9);
        assert!((d[1] - 0.01).abs() < 1e-9);
        assert!((d[2] + 0.01).abs() < 1e-6);
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut p = param(vec![1.0]);
        p.grad = Tensor::from_vec(&[1], vec![2.0]).unwrap();
        sgd_step(&mut [&mut p], 0.25);
        assert_eq!(p.value.data(), &[0.5]);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut p = param(vec![0.0, 0.0]);
        p.grad = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        let n = clip_global_norm(&mut [&mut p], 1.0);
        assert_eq!(n, 5.0);
        assert!((p.grad.sum_squares().sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = param(vec![0.1, 0.2]);
            let mut adam = Adam::new(1e-2);
            for i in 0..5 {
                p.grad = Tensor::from_vec(&[2], vec![i as f64, -0.5]).unwrap();
                adam.step(&mut [&mut p]);
            }
            p.value
        };
        assert_eq!(run(), run());
    }
}
