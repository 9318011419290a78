//! Brute-force oracles and shared fixtures for the integration tests and
//! the acceptance target.
#![allow(dead_code)]

use std::collections::HashMap;

use proptest::prelude::*;
use rand::Rng;
use reprobe_core::analysis::{fit_relation_majority, fit_word_majority, relation_gold};
use reprobe_core::corpus::{
    apply_segmentation, desegment, learn_bpe, Relation, RelationCorpus, RelationSentence, Scheme,
    SegmentationModel, Sentence, TaggedCorpus, TaggedSentence,
};
use reprobe_core::extraction::{Aggregation, LayerSelector, Side};
use reprobe_core::nmt::{batch_loss, NmtConfig, NmtModel};
use reprobe_core::numerics::{
    finite_difference_check, lstm_backward, lstm_forward, seeded_rng, GradCheckReport, LstmParams,
    Parameter, Parameterized, Tensor,
};
use reprobe_core::probe::{ProbeDataset, ProbeParameters, Provenance, RowInfo};

/// Brute-force merge learner working directly on the token stream: counts
/// every adjacent pair occurrence, picks the highest count and breaks ties by
/// the earliest occurrence in reading order.
pub fn oracle_bpe(tokens: &[String], num_ops: usize) -> Vec<(String, String)> {
    let mut words: Vec<Vec<String>> = tokens
        .iter()
        .map(|t| {
            let chars: Vec<String> = t.chars().map(String::from).collect();
            let n = chars.len();
            chars
                .into_iter()
                .enumerate()
                .map(|(i, c)| if i + 1 == n { c + "</w>" } else { c })
                .collect()
        })
        .collect();
    let mut merges = Vec::new();
    for _ in 0..num_ops {
        let mut counts: HashMap<(String, String), (usize, usize)> = HashMap::new();
        let mut clock = 0;
        for w in &words {
            for i in 0..w.len().saturating_sub(1) {
                let e = counts
                    .entry((w[i].clone(), w[i + 1].clone()))
                    .or_insert((0, clock));
                e.0 += 1;
                clock += 1;
            }
        }
        let Some(best) = counts
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .map(|(p, _)| p.clone())
        else {
            break;
        };
        for w in &mut words {
            let mut out = Vec::new();
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == best.0 && w[i + 1] == best.1 {
                    out.push(format!("{}{}", w[i], w[i + 1]));
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *w = out;
        }
        merges.push(best);
    }
    merges
}

pub fn word() -> impl Strategy<Value = String> {
    "[a-d]{1,8}"
}

/// Up to 50 types drawn into a short token stream.
pub fn corpus() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(word(), 1..=50).prop_flat_map(|types| {
        let n = types.len();
        prop::collection::vec(0..n, 1..120)
            .prop_map(move |ix| ix.into_iter().map(|i| types[i].clone()).collect())
    })
}

pub fn sentences(tokens: &[String]) -> Vec<Sentence> {
    tokens
        .chunks(7)
        .map(|c| Sentence::new(c.to_vec()))
        .collect()
}

/// Most common label among `labels`; ties to the smallest string.
pub fn brute_majority<'a>(labels: impl Iterator<Item = &'a str>) -> Option<String> {
    let all: Vec<&str> = labels.collect();
    let mut best: Option<(usize, &str)> = None;
    for &l in &all {
        let n = all.iter().filter(|&&x| x == l).count();
        best = match best {
            Some((bn, bl)) if bn > n || (bn == n && bl <= l) => Some((bn, bl)),
            _ => Some((n, l)),
        };
    }
    best.map(|(_, l)| l.to_string())
}

pub fn tagged(sents: &[Vec<(usize, usize)>]) -> TaggedCorpus {
    let mut c = TaggedCorpus::default();
    for s in sents {
        let tokens = s.iter().map(|&(w, _)| format!("w{w}")).collect();
        let tags: Vec<String> = s.iter().map(|&(_, t)| format!("T{t}")).collect();
        c.tag_set.extend(tags.iter().cloned());
        c.sentences.push(TaggedSentence {
            sentence: Sentence::new(tokens),
            tags,
        });
    }
    c
}

pub fn tagged_corpus(words: usize) -> impl Strategy<Value = Vec<Vec<(usize, usize)>>> {
    prop::collection::vec(prop::collection::vec((0..words, 0usize..3), 1..6), 1..8)
}

/// Sentences of 2..6 words with arbitrary (head, modifier) arcs.
/// Sentences of `(word, tag)` ids.
pub type RawTagged = Vec<Vec<(usize, usize)>>;

/// Words of a sentence plus `(head, modifier, label)` arcs.
pub type RawRelations = Vec<(Vec<usize>, Vec<(usize, usize, usize)>)>;

pub fn relation_corpus() -> impl Strategy<Value = RawRelations> {
    prop::collection::vec(
        (2usize..6).prop_flat_map(|n| {
            (
                prop::collection::vec(0usize..4, n),
                prop::collection::vec((0..n, 0..n, 0usize..3), 0..4),
            )
        }),
        1..8,
    )
}

pub fn relations(raw: &RawRelations) -> RelationCorpus {
    let mut c = RelationCorpus::default();
    for (words, arcs) in raw {
        let relations: Vec<Relation> = arcs
            .iter()
            .filter(|(h, m, _)| h != m)
            .map(|&(head, modifier, l)| Relation {
                head,
                modifier,
                label: format!("L{l}"),
            })
            .collect();
        c.label_set
            .extend(relations.iter().map(|r| r.label.clone()));
        c.sentences.push(RelationSentence {
            sentence: Sentence::new(words.iter().map(|w| format!("v{w}")).collect()),
            relations,
        });
    }
    c
}

/// Clipped n-gram precision by exhaustive scanning, geometric mean as a
/// product root.
pub fn bleu_oracle(hyp: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut prod = 1.0;
    for n in 1..=4 {
        let (mut hit, mut total) = (0usize, 0usize);
        for (h, r) in hyp.iter().zip(refs) {
            let hg: Vec<&[String]> = if h.len() >= n {
                h.windows(n).collect()
            } else {
                vec![]
            };
            let rg: Vec<&[String]> = if r.len() >= n {
                r.windows(n).collect()
            } else {
                vec![]
            };
            total += hg.len();
            let mut seen: Vec<&[String]> = Vec::new();
            for g in &hg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g);
                let in_h = hg.iter().filter(|x| *x == g).count();
                let in_r = rg.iter().filter(|x| *x == g).count();
                hit += in_h.min(in_r);
            }
        }
        if hit == 0 {
            return 0.0;
        }
        prod *= hit as f64 / total as f64;
    }
    let c: usize = hyp.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * prod.powf(0.25)
}

/// LSTM run over a few steps with the shared input as a parameter too, so
/// the input gradient is checked along with the weights.
pub struct Unrolled {
    pub cell: LstmParams<f64>,
    pub x: Parameter<f64>,
    /// Fixed readout weights per step for `h`, and for the final `c`.
    pub read_h: Vec<Tensor<f64>>,
    pub read_c: Tensor<f64>,
    pub masks: Vec<Vec<f64>>,
}

impl Parameterized<f64> for Unrolled {
    fn parameters(&self) -> Vec<&Parameter<f64>> {
        let mut v: Vec<&Parameter<f64>> = self.cell.parameters().into();
        v.push(&self.x);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        let [a, b, c] = self.cell.parameters_mut();
        vec![a, b, c, &mut self.x]
    }
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn unrolled_loss(m: &mut Unrolled, backward: bool) -> reprobe_core::Result<f64> {
    let (b, k) = (m.x.value.rows(), m.cell.hidden_size());
    let mut h = Tensor::zeros(&[b, k]);
    let mut c = Tensor::zeros(&[b, k]);
    let mut caches = Vec::new();
    let mut loss = 0.0;
    for (t, mask) in m.masks.iter().enumerate() {
        let (h2, c2, cache) = lstm_forward(&m.cell, &m.x.value, &h, &c, Some(mask))?;
        loss += dot(&h2, &m.read_h[t]);
        caches.push(cache);
        h = h2;
        c = c2;
    }
    loss += dot(&c, &m.read_c);
    if backward {
        let mut dh = Tensor::zeros(&[b, k]);
        let mut dc = m.read_c.clone();
        for t in (0..caches.len()).rev() {
            dh.add_assign(&m.read_h[t])?;
            let (dx, dh_prev, dc_prev) = lstm_backward(&mut m.cell, &caches[t], &dh, &dc)?;
            m.x.grad.add_assign(&dx)?;
            dh = dh_prev;
            dc = dc_prev;
        }
    }
    Ok(loss)
}

pub fn tiny(layers: usize) -> NmtConfig {
    let mut c = NmtConfig::new(9, 10);
    c.embedding_size = 3;
    c.hidden_size = 4;
    c.num_layers = layers;
    c.dropout = 0.0;
    c.seed = 11;
    c
}

pub fn scaled(mut m: NmtModel<f64>, s: f64) -> NmtModel<f64> {
    for p in m.parameters_mut() {
        p.value.scale(s);
    }
    m
}

/// Finite-difference check of the mean per-sentence loss of a tiny model.
pub fn nmt_gradcheck(layers: usize, src: &[&[usize]], tgt: &[&[usize]]) -> GradCheckReport {
    // larger weights than the default init give gradients well above the
    // finite-difference noise floor
    let mut m = scaled(NmtModel::<f64>::new(&tiny(layers)).unwrap(), 5.0);
    let b = src.len() as f64;
    finite_difference_check(
        &mut m,
        |m, grad| Ok(batch_loss(m, src, tgt, grad)?.0 / b),
        1e-5,
        None,
    )
    .unwrap()
}

/// Three masked LSTM steps with readouts on every `h` and the final `c`.
pub fn lstm_gradcheck() -> GradCheckReport {
    let mut rng = seeded_rng(3);
    let (b, input, k, steps) = (3, 4, 5, 3);
    let mut m = Unrolled {
        cell: LstmParams::new("cell", input, k, 0.5, &mut rng),
        x: Parameter::new("x", Tensor::uniform(&[b, input], -1.0, 1.0, &mut rng)),
        read_h: (0..steps)
            .map(|_| Tensor::uniform(&[b, k], -1.0, 1.0, &mut rng))
            .collect(),
        read_c: Tensor::uniform(&[b, k], -1.0, 1.0, &mut rng),
        // row 2 is padding after the first step
        masks: vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
        ],
    };
    finite_difference_check(&mut m, unrolled_loss, 1e-5, None).unwrap()
}

pub fn probe_gradcheck() -> GradCheckReport {
    let mut rng = seeded_rng(4);
    let mut p = ProbeParameters::zeros(4, 6);
    for q in p.parameters_mut() {
        q.value = Tensor::uniform(q.value.shape(), -0.5, 0.5, &mut rng);
    }
    let x = Tensor::uniform(&[7, 6], -2.0, 2.0, &mut rng);
    let t: Vec<usize> = (0..7).map(|i| i % 4).collect();
    finite_difference_check(&mut p, |p, g| p.batch_loss(&x, &t, g), 1e-5, None).unwrap()
}

pub const TAGS: [&str; 3] = ["A", "B", "C"];

/// 200 rows in 10 dimensions; class `c` sits at +4 on dims `3c..3c+3`.
pub fn separable(seed: u64) -> ProbeDataset {
    let mut rng = seeded_rng(seed);
    let (n, dim) = (200, 10);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for i in 0..n {
        let c = rng.gen_range(0..3);
        for d in 0..dim {
            let centre = if d / 3 == c { 4.0 } else { 0.0 };
            features.push(centre + rng.gen_range(-1.0f32..1.0));
        }
        labels.push(TAGS[c].to_string());
        rows.push(RowInfo {
            sentence: i,
            index: 0,
            head: None,
            word: format!("x{i}"),
        });
    }
    ProbeDataset {
        dim,
        features,
        labels,
        rows,
        provenance: Provenance {
            task: "toy".into(),
            side: Side::Encoder,
            layers: LayerSelector::Single(1),
            aggregation: Aggregation::Last,
        },
    }
}

pub fn check_bpe(tokens: &[String], ops: usize) -> Result<(), TestCaseError> {
    let model = learn_bpe(&sentences(tokens), ops).unwrap();
    prop_assert_eq!(model.merges().to_vec(), oracle_bpe(tokens, ops));
    Ok(())
}

pub fn check_round_trip(s: &Sentence, model: &SegmentationModel) -> Result<(), TestCaseError> {
    let seg = apply_segmentation(s, model).unwrap();
    seg.validate().unwrap();
    prop_assert_eq!(&desegment(&seg.units, model.scheme()), s);
    prop_assert_eq!(&seg.words(), &s.tokens);
    Ok(())
}

pub fn plain_words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-zA-Z0-9.,'-]{1,10}", 1..12)
}

pub fn check_fixed_round_trip(words: Vec<String>) -> Result<(), TestCaseError> {
    let s = Sentence::new(words);
    check_round_trip(&s, &SegmentationModel::fixed(Scheme::Word))?;
    check_round_trip(&s, &SegmentationModel::fixed(Scheme::Char))
}

pub fn bpe_round_trip_input() -> impl Strategy<Value = (Vec<String>, usize, Vec<String>)> {
    (
        corpus(),
        0usize..40,
        prop::collection::vec("[a-f]{1,10}", 1..12),
    )
}

pub fn check_bpe_round_trip(
    (train, ops, words): (Vec<String>, usize, Vec<String>),
) -> Result<(), TestCaseError> {
    let model = learn_bpe(&sentences(&train), ops).unwrap();
    // includes words never seen while learning
    check_round_trip(&Sentence::new(words), &model)?;
    let reloaded = SegmentationModel::from_text(&model.to_text()).unwrap();
    prop_assert_eq!(reloaded.merges(), model.merges());
    Ok(())
}

pub fn morpheme_words() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec("[a-z]{1,4}", 1..4), 1..10)
}

pub fn check_morpheme_round_trip(words: Vec<Vec<String>>) -> Result<(), TestCaseError> {
    let mut units = Vec::new();
    for pieces in &words {
        for (i, p) in pieces.iter().enumerate() {
            units.push(if i + 1 < pieces.len() {
                format!("{p}@@")
            } else {
                p.clone()
            });
        }
    }
    let joined: Vec<String> = words.iter().map(|p| p.concat()).collect();
    let seg = apply_segmentation(
        &Sentence::new(units.clone()),
        &SegmentationModel::fixed(Scheme::Morpheme),
    )
    .unwrap();
    seg.validate().unwrap();
    prop_assert_eq!(&seg.units, &units);
    prop_assert_eq!(seg.words(), joined.clone());
    prop_assert_eq!(desegment(&seg.units, Scheme::Morpheme).tokens, joined);
    Ok(())
}

/// Training words range over 0..4 and test words over 0..6, so words 4 and 5
/// exercise the global fallback.
pub fn word_majority_input() -> impl Strategy<Value = (RawTagged, RawTagged)> {
    (tagged_corpus(4), tagged_corpus(6))
}

pub fn check_word_majority((train, test): (RawTagged, RawTagged)) -> Result<(), TestCaseError> {
    let (train, test) = (tagged(&train), tagged(&test));
    let m = fit_word_majority(&train).unwrap();
    let pairs: Vec<(&String, &String)> = train
        .sentences
        .iter()
        .flat_map(|s| s.sentence.tokens.iter().zip(&s.tags))
        .collect();
    let global = brute_majority(pairs.iter().map(|(_, t)| t.as_str())).unwrap();
    prop_assert_eq!(&m.global, &global);
    for w in test.sentences.iter().flat_map(|s| &s.sentence.tokens) {
        let want = brute_majority(
            pairs
                .iter()
                .filter(|(x, _)| *x == w)
                .map(|(_, t)| t.as_str()),
        )
        .unwrap_or_else(|| global.clone());
        prop_assert_eq!(m.predict(w), want.as_str());
    }
    Ok(())
}

pub fn relation_majority_input() -> impl Strategy<Value = (RawRelations, RawRelations)> {
    (relation_corpus(), relation_corpus())
}

pub fn check_relation_majority(
    (train, test): (RawRelations, RawRelations),
) -> Result<(), TestCaseError> {
    let (train, test) = (relations(&train), relations(&test));
    let arcs: Vec<(&str, &str, &str)> = train
        .sentences
        .iter()
        .flat_map(|s| {
            s.relations.iter().map(move |r| {
                (
                    s.sentence.tokens[r.head].as_str(),
                    s.sentence.tokens[r.modifier].as_str(),
                    r.label.as_str(),
                )
            })
        })
        .collect();
    let Some(global) = brute_majority(arcs.iter().map(|a| a.2)) else {
        prop_assert!(fit_relation_majority(&train).is_err());
        return Ok(());
    };
    let m = fit_relation_majority(&train).unwrap();
    for s in &test.sentences {
        for r in &s.relations {
            let (h, md) = (&s.sentence.tokens[r.head], &s.sentence.tokens[r.modifier]);
            let want = brute_majority(arcs.iter().filter(|a| a.0 == h && a.1 == md).map(|a| a.2))
                .or_else(|| brute_majority(arcs.iter().filter(|a| a.1 == md).map(|a| a.2)))
                .unwrap_or_else(|| global.clone());
            prop_assert_eq!(m.predict(h, md), want.as_str());
        }
    }
    prop_assert_eq!(m.predict_corpus(&test).len(), relation_gold(&test).len());
    Ok(())
}
