mod common;

use common::*;

use proptest::prelude::*;
use reprobe_core::corpus::build_vocabulary;
use reprobe_core::nmt::{
    attend, batch_loss, encode, init_random, teacher_forced_trace, train, translate_greedy,
    Checkpoint, EncodedPair, NmtConfig, NmtModel,
};
use reprobe_core::numerics::{Parameterized, Tensor};
use reprobe_core::synthetic::copy_task;

#[test]
fn single_step_one_layer_gradient() {
    let err = nmt_gradcheck(1, &[&[4]], &[&[]]).max_rel_error;
    assert!(err < 1e-4, "max rel error {err}");
}

#[test]
fn one_layer_batch_gradient_with_padding() {
    let err = nmt_gradcheck(1, &[&[4, 5, 6], &[7]], &[&[5, 4], &[6, 7, 8]]).max_rel_error;
    assert!(err < 1e-4, "max rel error {err}");
}

#[test]
fn two_layer_full_gradient() {
    let err = nmt_gradcheck(2, &[&[4, 8, 5], &[6, 7]], &[&[5, 6], &[7, 4, 4]]).max_rel_error;
    assert!(err < 1e-3, "max rel error {err}");
}

#[test]
fn attention_weights_from_scores() {
    let mut c = tiny(1);
    c.hidden_size = 2;
    let mut m = NmtModel::<f64>::new(&c).unwrap();
    m.attn_score.value = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let keys = Tensor::from_vec(&[2, 2], vec![2f64.ln(), 0.0, 0.0, 0.0]).unwrap();
    let (ctx, w) = attend(&m, &keys, &[1.0, 0.0]).unwrap();
    assert!((w[0] - 2.0 / 3.0).abs() < 1e-12 && (w[1] - 1.0 / 3.0).abs() < 1e-12);
    assert!((ctx[0] - 2.0 / 3.0 * 2f64.ln()).abs() < 1e-12);

    let single = Tensor::from_vec(&[1, 2], vec![0.3, -0.2]).unwrap();
    let (ctx, w) = attend(&m, &single, &[0.7, 0.1]).unwrap();
    assert_eq!(w, vec![1.0]);
    assert_eq!(ctx, vec![0.3, -0.2]);
}

#[test]
fn tied_directions_mirror_under_reversal() {
    let mut m = NmtModel::<f64>::new(&tiny(1)).unwrap();
    m.encoder[0].backward = m.encoder[0].forward.clone();
    let src = [4, 5, 6, 7];
    let rev: Vec<usize> = src.iter().rev().copied().collect();
    let a = encode(&m, &src).unwrap();
    let b = encode(&m, &rev).unwrap();
    let n = src.len();
    for i in 0..n {
        assert_eq!(
            a.layers[0].forward.row(i),
            b.layers[0].backward.row(n - 1 - i)
        );
    }
}

#[test]
fn encoder_shapes_and_empty_input() {
    let mut c = tiny(3);
    c.hidden_size = 5;
    let m = NmtModel::<f64>::new(&c).unwrap();
    let s = encode(&m, &[4, 5, 6]).unwrap();
    assert_eq!(s.layers.len(), 3);
    assert_eq!(s.embeddings.shape(), &[3, 3]);
    for l in &s.layers {
        assert_eq!(l.forward.shape(), &[3, 5]);
        assert_eq!(l.backward.shape(), &[3, 5]);
    }
    assert!(encode(&m, &[]).is_err());
}

#[test]
fn trace_is_consistent_with_batch_loss() {
    let mut m = NmtModel::<f64>::new(&tiny(2)).unwrap();
    let (src, tgt) = ([4usize, 5, 6], [7usize, 8]);
    let trace = teacher_forced_trace(&m, &src, &tgt).unwrap();
    assert_eq!(trace.losses.len(), tgt.len() + 1);
    for w in &trace.weights {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(w.iter().all(|&x| x >= 0.0));
    }
    let (total, tokens) = batch_loss(&mut m, &[&src], &[&tgt], false).unwrap();
    assert_eq!(tokens, 3);
    assert!((total / tokens as f64 - trace.mean_loss()).abs() < 1e-12);
    let again = teacher_forced_trace(&m, &src, &tgt).unwrap();
    assert_eq!(again, trace);
}

#[test]
fn greedy_respects_length_cap_and_vocabulary() {
    let m = NmtModel::<f32>::new(&tiny(2)).unwrap();
    let out = translate_greedy(&m, &[4, 5], 1).unwrap();
    assert!(out.len() <= 1);
    let out = translate_greedy(&m, &[4, 5, 6], 20).unwrap();
    assert!(out.len() <= 20);
    assert!(out
        .iter()
        .all(|&id| (1..10).contains(&id) && id != 2 && id != 3));
}

#[test]
fn random_init_is_seeded() {
    let c = tiny(2);
    let a = init_random::<f32>(&c, 5).unwrap();
    let b = init_random::<f32>(&c, 5).unwrap();
    let d = init_random::<f32>(&c, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.checksum(), d.checksum());
    let ck = Checkpoint {
        model: a,
        epoch: 0,
        valid_loss: f64::INFINITY,
    };
    assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
}

proptest! {
    #[test]
    fn attention_weights_are_a_distribution(
        keys in prop::collection::vec(-3.0f64..3.0, 4..=24),
        query in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let mut c = tiny(1);
        c.hidden_size = 4;
        let m = NmtModel::<f64>::new(&c).unwrap();
        let n = keys.len() / 4;
        let keys = Tensor::from_vec(&[n, 4], keys[..n * 4].to_vec()).unwrap();
        let (ctx, w) = attend(&m, &keys, &query).unwrap();
        prop_assert_eq!(w.len(), n);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert_eq!(ctx.len(), 4);
    }
}

fn copy_setup(
    epochs: usize,
    decay_start: usize,
) -> (NmtConfig, Vec<EncodedPair>, Vec<EncodedPair>) {
    let corpus = copy_task(1500, 8, 2, 5, 3);
    let text: Vec<Vec<String>> = corpus.sources().map(|s| s.tokens.clone()).collect();
    let vocab = build_vocabulary(&text, 100).unwrap();
    let pairs: Vec<EncodedPair> = text
        .iter()
        .map(|t| EncodedPair {
            src: vocab.encode(t),
            tgt: vocab.encode(t),
        })
        .collect();
    let mut c = NmtConfig::new(vocab.len(), vocab.len());
    c.num_layers = 1;
    c.embedding_size = 32;
    c.hidden_size = 32;
    c.dropout = 0.0;
    c.epochs = epochs;
    c.batch_size = 16;
    c.schedule.lr0 = 0.5;
    c.schedule.decay_start_epoch = decay_start;
    c.init_range = 0.3;
    let (train_pairs, valid) = pairs.split_at(1350);
    (c, train_pairs.to_vec(), valid.to_vec())
}

#[test]
fn copy_task_is_learned() {
    let (c, train_pairs, valid) = copy_setup(20, 10);
    let out = train(&c, &train_pairs, &valid).unwrap();
    let first = out.log[0].valid_loss;
    assert!(out.best.valid_loss < first / 4.0, "{:?}", out.log);
    let copied = valid
        .iter()
        .filter(|p| translate_greedy(&out.best.model, &p.src, 20).unwrap() == p.tgt)
        .count();
    assert!(
        copied * 10 >= valid.len() * 8,
        "copied {copied} of {}",
        valid.len()
    );
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let (c, train_pairs, valid) = copy_setup(2, 2);
    let a = train(&c, &train_pairs, &valid).unwrap();
    let b = train(&c, &train_pairs, &valid).unwrap();
    assert_eq!(a.best.to_bytes(), b.best.to_bytes());
    let mut other = c.clone();
    other.seed += 1;
    let d = train(&other, &train_pairs, &valid).unwrap();
    assert_ne!(a.best.to_bytes(), d.best.to_bytes());
}
