use proptest::prelude::*;
use reprobe_core::extraction::{
    extract_decoder, extract_encoder, Aggregation, DecoderStep, EncodedSentence, LayerSelector,
    RepresentationSet,
};
use reprobe_core::nmt::{NmtConfig, NmtModel};
use reprobe_core::numerics::Parameterized;

fn model(layers: usize, e: usize, k: usize, seed: u64) -> NmtModel<f32> {
    let mut c = NmtConfig::new(20, 20);
    c.num_layers = layers;
    c.embedding_size = e;
    c.hidden_size = k;
    c.seed = seed;
    NmtModel::new(&c).unwrap()
}

/// One sentence whose word `i` covers `widths[i]` units.
fn sentence(ids: &[usize], widths: &[usize]) -> EncodedSentence {
    let mut spans = Vec::new();
    let mut at = 0;
    for &w in widths {
        spans.push(at..at + w);
        at += w;
    }
    EncodedSentence {
        words: (0..widths.len()).map(|i| format!("w{i}")).collect(),
        ids: ids[..at].to_vec(),
        spans,
    }
}

fn slice(set: &RepresentationSet, word: usize, range: std::ops::Range<usize>) -> Vec<f32> {
    set.sentences[0].vectors[word][range].to_vec()
}

#[test]
fn full_size_dimensional_contract() {
    let m = model(4, 500, 500, 1);
    let s = sentence(&[4, 5, 6, 7, 8, 9], &[2, 1, 3]);
    let checksum = m.checksum();
    let enc = extract_encoder(
        &m,
        std::slice::from_ref(&s),
        LayerSelector::All,
        Aggregation::Average,
    )
    .unwrap();
    assert_eq!(enc.dim, 4000);
    assert!(enc.sentences[0].vectors.iter().all(|v| v.len() == 4000));
    let pair = [(s.clone(), s.clone())];
    let dec = extract_decoder(
        &m,
        &pair,
        LayerSelector::All,
        Aggregation::Average,
        DecoderStep::Consuming,
    )
    .unwrap();
    assert_eq!(dec.dim, 2000);
    for l in 1..=4 {
        let one = extract_encoder(
            &m,
            std::slice::from_ref(&s),
            LayerSelector::Single(l),
            Aggregation::Average,
        )
        .unwrap();
        let r = (l - 1) * 1000..l * 1000;
        for w in 0..3 {
            assert_eq!(one.sentences[0].vectors[w], slice(&enc, w, r.clone()));
        }
        let one = extract_decoder(
            &m,
            &pair,
            LayerSelector::Single(l),
            Aggregation::Average,
            DecoderStep::Consuming,
        )
        .unwrap();
        let r = (l - 1) * 500..l * 500;
        for w in 0..3 {
            assert_eq!(one.sentences[0].vectors[w], slice(&dec, w, r.clone()));
        }
    }
    assert_eq!(m.checksum(), checksum);
}

#[test]
fn embedding_layer_features() {
    let m = model(2, 3, 4, 5);
    let s = sentence(&[4, 5, 6], &[1, 2]);
    let emb = extract_encoder(
        &m,
        std::slice::from_ref(&s),
        LayerSelector::Embedding,
        Aggregation::Average,
    )
    .unwrap();
    assert_eq!(emb.dim, 3);
    let want: Vec<f32> = (0..3)
        .map(|j| (m.src_embed.value.row(5)[j] + m.src_embed.value.row(6)[j]) / 2.0)
        .collect();
    assert_eq!(emb.sentences[0].vectors[1], want);

    let dec = extract_decoder(
        &m,
        &[(s.clone(), s.clone())],
        LayerSelector::Embedding,
        Aggregation::Last,
        DecoderStep::Consuming,
    )
    .unwrap();
    assert_eq!(
        dec.sentences[0].vectors[1],
        m.tgt_embed.value.row(6).to_vec()
    );
}

#[test]
fn selector_beyond_depth_is_rejected() {
    let m = model(2, 3, 4, 5);
    let s = sentence(&[4, 5], &[1, 1]);
    assert!(extract_encoder(&m, &[s], LayerSelector::Single(3), Aggregation::Last).is_err());
}

#[test]
fn span_past_sentence_end_is_rejected() {
    let m = model(1, 3, 4, 5);
    let mut s = sentence(&[4, 5], &[1, 1]);
    s.spans[1] = 1..3;
    assert!(extract_encoder(&m, &[s], LayerSelector::All, Aggregation::Last).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn width_one_spans_aggregate_identically(
        seed in any::<u64>(),
        layers in 1usize..4,
        widths in prop::collection::vec(1usize..3, 1..6),
        ids in prop::collection::vec(4usize..20, 16),
    ) {
        let m = model(layers, 3, 4, seed);
        let s = sentence(&ids, &widths);
        let pair = [(s.clone(), s.clone())];
        let checksum = m.checksum();
        let enc_last = extract_encoder(&m, std::slice::from_ref(&s), LayerSelector::All, Aggregation::Last).unwrap();
        let enc_avg = extract_encoder(&m, std::slice::from_ref(&s), LayerSelector::All, Aggregation::Average).unwrap();
        let dec_last = extract_decoder(&m, &pair, LayerSelector::All, Aggregation::Last, DecoderStep::Consuming).unwrap();
        let dec_avg = extract_decoder(&m, &pair, LayerSelector::All, Aggregation::Average, DecoderStep::Consuming).unwrap();
        for (i, &w) in widths.iter().enumerate() {
            if w == 1 {
                prop_assert_eq!(&enc_last.sentences[0].vectors[i], &enc_avg.sentences[0].vectors[i]);
                prop_assert_eq!(&dec_last.sentences[0].vectors[i], &dec_avg.sentences[0].vectors[i]);
            }
        }
        for set in [&enc_last, &enc_avg, &dec_last, &dec_avg] {
            prop_assert!(set.sentences[0].vectors.iter().flatten().all(|v| v.is_finite()));
        }
        prop_assert_eq!(m.checksum(), checksum);
    }

    #[test]
    fn predicting_step_lags_consuming_by_one_unit(
        seed in any::<u64>(),
        n in 2usize..6,
        ids in prop::collection::vec(4usize..20, 6),
    ) {
        let m = model(2, 3, 4, seed);
        let s = sentence(&ids, &vec![1; n]);
        let pair = [(s.clone(), s)];
        let c = extract_decoder(&m, &pair, LayerSelector::All, Aggregation::Last, DecoderStep::Consuming).unwrap();
        let p = extract_decoder(&m, &pair, LayerSelector::All, Aggregation::Last, DecoderStep::Predicting).unwrap();
        for i in 1..n {
            prop_assert_eq!(&p.sentences[0].vectors[i], &c.sentences[0].vectors[i - 1]);
        }
    }
}
