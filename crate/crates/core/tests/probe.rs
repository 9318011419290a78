mod common;

use common::*;

use std::collections::BTreeMap;

use proptest::prelude::*;
use reprobe_core::corpus::{Sentence, TaggedCorpus, TaggedSentence};
use reprobe_core::extraction::{
    Aggregation, LayerSelector, RepresentationSet, SentenceVectors, Side,
};
use reprobe_core::probe::{
    accuracy, build_word_dataset, evaluate_accuracy, per_tag_f1, train_probe, ProbeConfig,
    ProbeModel,
};

fn bits(p: &ProbeModel) -> Vec<u64> {
    p.weights
        .data()
        .iter()
        .chain(&p.bias)
        .map(|v| v.to_bits())
        .collect()
}

#[test]
fn separable_data_is_learned_deterministically() {
    let ds = separable(21);
    let before = ds.clone();
    let a = train_probe(&ds, &ProbeConfig::default()).unwrap();
    let b = train_probe(&ds, &ProbeConfig::default()).unwrap();
    assert_eq!(ds, before);
    assert_eq!(bits(&a), bits(&b));
    let acc = evaluate_accuracy(&a, &ds).unwrap();
    assert!(acc >= 0.99, "training accuracy {acc}");
}

#[test]
fn different_seeds_shuffle_differently() {
    let mut ds = separable(21);
    // a single batch would hide the shuffle order
    let cfg = |seed| ProbeConfig {
        batch_size: 16,
        seed,
        ..ProbeConfig::default()
    };
    ds.labels[0] = "C".into();
    let a = train_probe(&ds, &cfg(1)).unwrap();
    let b = train_probe(&ds, &cfg(2)).unwrap();
    assert_ne!(bits(&a), bits(&b));
}

#[test]
fn probe_text_round_trip() {
    let ds = separable(5);
    let p = train_probe(&ds, &ProbeConfig::default()).unwrap();
    let (q, task) = ProbeModel::from_text(&p.to_text("pos")).unwrap();
    assert_eq!(task, "pos");
    assert_eq!(bits(&p), bits(&q));
    assert_eq!(p.tags, q.tags);
}

#[test]
fn word_dataset_follows_annotations() {
    let repr = RepresentationSet {
        side: Side::Encoder,
        layers: LayerSelector::Single(2),
        aggregation: Aggregation::Average,
        dim: 2,
        sentences: vec![SentenceVectors {
            words: vec!["a".into(), "b".into()],
            vectors: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        }],
    };
    let mut corpus = TaggedCorpus::default();
    corpus.sentences.push(TaggedSentence {
        sentence: Sentence::parse("a b"),
        tags: vec!["X".into(), "Y".into()],
    });
    let ds = build_word_dataset(&repr, &corpus, "pos").unwrap();
    assert_eq!(ds.features, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(ds.labels, vec!["X", "Y"]);
    assert_eq!(ds.provenance.layers, LayerSelector::Single(2));

    corpus.sentences[0].tags.push("Z".into());
    corpus.sentences[0].sentence = Sentence::parse("a b c");
    let err = build_word_dataset(&repr, &corpus, "pos")
        .unwrap_err()
        .to_string();
    assert!(err.contains("sentence 0"), "{err}");
}

fn labels() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..4, 0usize..4), 1..60)
}

fn split(pairs: &[(usize, usize)]) -> (Vec<String>, Vec<String>) {
    let name = |i: usize| ["p", "q", "r", "s"][i].to_string();
    pairs.iter().map(|&(g, p)| (name(g), name(p))).unzip()
}

proptest! {
    #[test]
    fn micro_f1_equals_accuracy(pairs in labels()) {
        let (gold, pred) = split(&pairs);
        let acc = accuracy(&gold, &pred).unwrap();
        let r = per_tag_f1(&gold, &pred, &[], None).unwrap();
        prop_assert!((r.micro_f1 - acc).abs() < 1e-12);
    }

    #[test]
    fn duplicated_row_is_weighted(pairs in labels(), dup in any::<prop::sample::Index>()) {
        let (mut gold, mut pred) = split(&pairs);
        let n = gold.len() as f64;
        let acc = accuracy(&gold, &pred).unwrap();
        let i = dup.index(gold.len());
        let hit = (gold[i] == pred[i]) as u8 as f64;
        gold.push(gold[i].clone());
        pred.push(pred[i].clone());
        let acc2 = accuracy(&gold, &pred).unwrap();
        prop_assert!((acc2 - (acc * n + hit) / (n + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn accuracy_ignores_monotone_score_transforms(seed in any::<u64>(), a in 0.01f64..10.0, b in -5.0f64..5.0) {
        let ds = separable(seed);
        let mut p = train_probe(&ds, &ProbeConfig { epochs: 2, ..ProbeConfig::default() }).unwrap();
        let before = p.predict(&ds).unwrap();
        // a·s + b applied to every class score is the same affine map on W and b
        p.weights.scale(a);
        for v in &mut p.bias {
            *v = a * *v + b;
        }
        prop_assert_eq!(p.predict(&ds).unwrap(), before);
    }
}

#[test]
fn coarse_groups_pool_counts() {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let gold = s(&["NN", "NNS", "VB", "VBD"]);
    let pred = s(&["NNS", "NNS", "VB", "NN"]);
    let coarse: BTreeMap<String, String> = [("NN", "N"), ("NNS", "N"), ("VB", "V"), ("VBD", "V")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let r = per_tag_f1(&gold, &pred, &[], Some(&coarse)).unwrap();
    // N: tp 1, fp 2, fn 1 → 2/5 ; V: tp 1, fp 0, fn 1 → 2/3
    assert!((r.coarse["N"].unwrap() - 0.4).abs() < 1e-12);
    assert!((r.coarse["V"].unwrap() - 2.0 / 3.0).abs() < 1e-12);
}
