mod common;

use common::*;

use proptest::prelude::*;
use rand::Rng;
use reprobe_core::numerics::{
    clip_global_norm, dropout, lstm_cell, seeded_rng, sgd_step, softmax, softmax_row, Adam,
    LstmParams, Parameter, Tensor,
};

#[test]
fn lstm_cell_gradient() {
    let report = lstm_gradcheck();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn probe_gradient() {
    let report = probe_gradcheck();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(row in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let p = softmax_row(&row);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // |x| ≤ 50 keeps every exp(x - max) ≥ e^-100, well above underflow
        prop_assert!(p.iter().all(|&v| v > 0.0));
        let t = softmax(&Tensor::from_vec(&[1, row.len()], row.clone()).unwrap()).unwrap();
        prop_assert_eq!(t.data(), &p[..]);
    }

    #[test]
    fn lstm_output_is_bounded(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let mut rng = seeded_rng(seed);
        let cell = LstmParams::<f64>::new("c", 3, 4, scale, &mut rng);
        let x = Tensor::uniform(&[2, 3], -scale, scale, &mut rng);
        let mut h = Tensor::uniform(&[2, 4], -0.99, 0.99, &mut rng);
        let mut c = Tensor::uniform(&[2, 4], -scale, scale, &mut rng);
        for _ in 0..5 {
            (h, c) = lstm_cell(&x, &h, &c, &cell).unwrap();
            // with very large weights σ and tanh round to exactly 1 in f64
            prop_assert!(h.data().iter().all(|v| v.abs() < 1.0 || (v.abs() == 1.0 && scale > 10.0)));
        }
    }

    #[test]
    fn optimizer_steps_are_deterministic(seed in any::<u64>(), lr in 1e-4f64..1.0) {
        let mut rng = seeded_rng(seed);
        let mut make = || {
            let mut p = Parameter::new("p", Tensor::<f64>::uniform(&[3, 4], -1.0, 1.0, &mut rng));
            p.grad = Tensor::uniform(&[3, 4], -10.0, 10.0, &mut rng);
            p
        };
        let start = make();
        let (mut a, mut b) = (start.clone(), start.clone());
        let (mut adam_a, mut adam_b) = (Adam::new(lr), Adam::new(lr));
        for _ in 0..3 {
            adam_a.step(&mut [&mut a]);
            adam_b.step(&mut [&mut b]);
        }
        prop_assert_eq!(&a, &b);
        let (mut c, mut d) = (start.clone(), start);
        for p in [&mut c, &mut d] {
            clip_global_norm(&mut [&mut *p], 5.0);
            sgd_step(&mut [p], lr);
        }
        prop_assert_eq!(c, d);
    }

    #[test]
    fn seeded_rng_reproduces_masks_and_inits(seed in any::<u64>()) {
        let x = Tensor::<f64>::uniform(&[4, 8], -1.0, 1.0, &mut seeded_rng(0));
        let (a, ma) = dropout(&x, 0.3, true, &mut seeded_rng(seed)).unwrap();
        let (b, mb) = dropout(&x, 0.3, true, &mut seeded_rng(seed)).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(ma, mb);
        let p1 = LstmParams::<f32>::new("l", 3, 2, 0.1, &mut seeded_rng(seed));
        let p2 = LstmParams::<f32>::new("l", 3, 2, 0.1, &mut seeded_rng(seed));
        prop_assert_eq!(p1, p2);
    }
}

#[test]
fn clipping_bounds_the_global_norm() {
    let mut rng = seeded_rng(9);
    let mut a = Parameter::new("a", Tensor::<f64>::zeros(&[2, 2]));
    let mut b = Parameter::new("b", Tensor::<f64>::zeros(&[3]));
    a.grad = Tensor::uniform(&[2, 2], -50.0, 50.0, &mut rng);
    b.grad = Tensor::from_vec(&[3], vec![rng.gen_range(10.0..20.0), 0.0, 0.0]).unwrap();
    let before = clip_global_norm(&mut [&mut a, &mut b], 5.0);
    assert!(before > 5.0);
    let after = (a.grad.sum_squares() + b.grad.sum_squares()).sqrt();
    assert!((after - 5.0).abs() < 1e-12);
}
