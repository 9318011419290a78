//! Per-word feature vectors from a frozen translation model.
//!
//! Encoder words aggregate the forward and backward states of their units;
//! decoder words use teacher-forced decoder states. Layer 0 is the embedding
//! layer of the respective side.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::{SegmentedSentence, Vocabulary};
use crate::nmt::{encode, teacher_forced_trace, NmtModel};
use crate::numerics::{Parameterized, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Encoder,
    Decoder,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Encoder => "enc",
            Side::Decoder => "dec",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enc" | "encoder" => Ok(Side::Encoder),
            "dec" | "decoder" => Ok(Side::Decoder),
            _ => Err(Error::InvalidArgument(format!("unknown side {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregation {
    /// Forward state of the last unit, backward state of the first.
    Last,
    /// Mean over the word's units, per direction.
    Average,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Last => "last",
            Aggregation::Average => "avg",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(Aggregation::Last),
            "avg" | "average" => Ok(Aggregation::Average),
            _ => Err(Error::InvalidArgument(format!("unknown aggregation {s:?}"))),
        }
    }
}

/// Which layers contribute to a word vector. `Single(0)` and `Embedding`
/// select the same features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSelector {
    Single(usize),
    /// Layers 1..=L concatenated in order.
    All,
    Embedding,
}

impl LayerSelector {
    /// Layer indices in concatenation order.
    pub fn layers(self, num_layers: usize) -> Result<Vec<usize>> {
        match self {
            LayerSelector::Single(l) if l > num_layers => Err(Error::InvalidArgument(format!(
                "layer {l} requested from a {num_layers}-layer model"
            ))),
            LayerSelector::Single(l) => Ok(vec![l]),
            LayerSelector::All => Ok((1..=num_layers).collect()),
            LayerSelector::Embedding => Ok(vec![0]),
        }
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::Single(l) => write!(f, "{l}"),
            LayerSelector::All => f.write_str("all"),
            LayerSelector::Embedding => f.write_str("emb"),
        }
    }
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(LayerSelector::All),
            "emb" | "embedding" => Ok(LayerSelector::Embedding),
            _ => s
                .parse()
                .map(LayerSelector::Single)
                .map_err(|_| Error::InvalidArgument(format!("unknown layer selector {s:?}"))),
        }
    }
}

/// Which decoder step represents a target word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecoderStep {
    /// The state after consuming the word's unit as input.
    #[default]
    Consuming,
    /// The state that predicts the word's unit.
    Predicting,
}

/// Unit ids and word spans of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub words: Vec<String>,
    pub ids: Vec<usize>,
    pub spans: Vec<Range<usize>>,
}

impl EncodedSentence {
    pub fn new(seg: &SegmentedSentence, vocab: &Vocabulary) -> Self {
        EncodedSentence {
            words: seg.words(),
            ids: vocab.encode(&seg.units),
            spans: seg.spans.clone(),
        }
    }

    fn check_spans(&self) -> Result<()> {
        if self.words.len() != self.spans.len() {
            return Err(Error::Invariant(format!(
                "{} words but {} spans",
                self.words.len(),
                self.spans.len()
            )));
        }
        for s in &self.spans {
            if s.start >= s.end || s.end > self.ids.len() {
                return Err(Error::IndexOutOfRange {
                    index: s.end,
                    len: self.ids.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVectors {
    pub words: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    pub side: Side,
    pub layers: LayerSelector,
    pub aggregation: Aggregation,
    pub dim: usize,
    pub sentences: Vec<SentenceVectors>,
}

fn mean_rows<T: Scalar>(m: &Tensor<T>, span: &Range<usize>, out: &mut Vec<f32>) {
    let n = T::from_usize(span.len()).unwrap();
    for j in 0..m.cols() {
        let s: T = span.clone().map(|r| m.row(r)[j]).sum();
        out.push((s / n).to_f32().unwrap());
    }
}

fn push_row<T: Scalar>(m: &Tensor<T>, r: usize, out: &mut Vec<f32>) {
    out.extend(m.row(r).iter().map(|v| v.to_f32().unwrap()));
}

/// Aggregates a unidirectional stream over a span.
fn one_stream<T: Scalar>(m: &Tensor<T>, span: &Range<usize>, agg: Aggregation, out: &mut Vec<f32>) {
    match agg {
        Aggregation::Average => mean_rows(m, span, out),
        Aggregation::Last => push_row(m, span.end - 1, out),
    }
}

fn guard<T: Scalar, R>(model: &NmtModel<T>, f: impl FnOnce() -> Result<R>) -> Result<R> {
    let before = model.checksum();
    let r = f()?;
    if model.checksum() != before {
        return Err(Error::Invariant(
            "model parameters changed during extraction".into(),
        ));
    }
    Ok(r)
}

fn feature_dim<T: Scalar>(model: &NmtModel<T>, side: Side, layers: &[usize]) -> usize {
    layers
        .iter()
        .map(|&l| match (side, l) {
            (_, 0) => model.embedding_size(),
            (Side::Encoder, _) => 2 * model.hidden_size(),
            (Side::Decoder, _) => model.hidden_size(),
        })
        .sum()
}

pub fn extract_encoder<T: Scalar>(
    model: &NmtModel<T>,
    sentences: &[EncodedSentence],
    selector: LayerSelector,
    aggregation: Aggregation,
) -> Result<RepresentationSet> {
    let layers = selector.layers(model.num_layers())?;
    let dim = feature_dim(model, Side::Encoder, &layers);
    let sentences = guard(model, || {
        sentences
            .iter()
            .map(|s| {
                s.check_spans()?;
                let states = encode(model, &s.ids)?;
                let vectors = s
                    .spans
                    .iter()
                    .map(|span| {
                        let mut v = Vec::with_capacity(dim);
                        for &l in &layers {
                            if l == 0 {
                                one_stream(&states.embeddings, span, aggregation, &mut v);
                                continue;
                            }
                            let st = &states.layers[l - 1];
                            match aggregation {
                                Aggregation::Average => {
                                    mean_rows(&st.forward, span, &mut v);
                                    mean_rows(&st.backward, span, &mut v);
                                }
                                Aggregation::Last => {
                                    push_row(&st.forward, span.end - 1, &mut v);
                                    push_row(&st.backward, span.start, &mut v);
                                }
                            }
                        }
                        v
                    })
                    .collect();
                Ok(SentenceVectors {
                    words: s.words.clone(),
                    vectors,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(RepresentationSet {
        side: Side::Encoder,
        layers: selector,
        aggregation,
        dim,
        sentences,
    })
}

/// Teacher-forced decoder features for the target side of each pair.
pub fn extract_decoder<T: Scalar>(
    model: &NmtModel<T>,
    pairs: &[(EncodedSentence, EncodedSentence)],
    selector: LayerSelector,
    aggregation: Aggregation,
    step: DecoderStep,
) -> Result<RepresentationSet> {
    let layers = selector.layers(model.num_layers())?;
    let dim = feature_dim(model, Side::Decoder, &layers);
    let sentences = guard(model, || {
        pairs
            .iter()
            .map(|(src, tgt)| {
                if src.ids.is_empty() {
                    return Err(Error::Empty("source sentence for decoder extraction"));
                }
                tgt.check_spans()?;
                let trace = teacher_forced_trace(model, &src.ids, &tgt.ids)?;
                // step j consumed input j of [BOS, u_0, u_1, ...]
                let offset = match step {
                    DecoderStep::Consuming => 1,
                    DecoderStep::Predicting => 0,
                };
                let inputs: Vec<usize> = std::iter::once(crate::corpus::BOS)
                    .chain(tgt.ids.iter().copied())
                    .collect();
                let mut emb = Tensor::zeros(&[inputs.len(), model.embedding_size()]);
                for (j, &id) in inputs.iter().enumerate() {
                    emb.row_mut(j)
                        .copy_from_slice(model.tgt_embed.value.row(id));
                }
                let vectors = tgt
                    .spans
                    .iter()
                    .map(|span| {
                        let steps = span.start + offset..span.end + offset;
                        let mut v = Vec::with_capacity(dim);
                        for &l in &layers {
                            let m = if l == 0 { &emb } else { &trace.states[l - 1] };
                            one_stream(m, &steps, aggregation, &mut v);
                        }
                        v
                    })
                    .collect();
                Ok(SentenceVectors {
                    words: tgt.words.clone(),
                    vectors,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(RepresentationSet {
        side: Side::Decoder,
        layers: selector,
        aggregation,
        dim,
        sentences,
    })
}

/// `[head; modifier]` features for a relation.
pub fn concat_pair(sentence: &SentenceVectors, head: usize, modifier: usize) -> Result<Vec<f32>> {
    if head == modifier {
        return Err(Error::InvalidArgument(format!(
            "head and modifier are both word {head}"
        )));
    }
    let len = sentence.vectors.len();
    let get = |i: usize| {
        sentence
            .vectors
            .get(i)
            .ok_or(Error::IndexOutOfRange { index: i, len })
    };
    let (h, m) = (get(head)?, get(modifier)?);
    Ok(h.iter().chain(m).copied().collect())
}

impl RepresentationSet {
    pub fn num_words(&self) -> usize {
        self.sentences.iter().map(|s| s.vectors.len()).sum()
    }

    pub fn header(&self) -> String {
        format!(
            "side={} layers={} agg={} dim={}",
            self.side, self.layers, self.aggregation, self.dim
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for (si, s) in self.sentences.iter().enumerate() {
            for (wi, (w, v)) in s.words.iter().zip(&s.vectors).enumerate() {
                out.push_str(&format!("{si}\t{wi}\t{w}\t"));
                let mut first = true;
                for x in v {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    out.push_str(&x.to_string());
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "representations";
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(ctx, 1, "missing header"))?;
        let (mut side, mut layers, mut agg, mut dim) = (None, None, None, None);
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(ctx, 1, format!("bad header field {field:?}")))?;
            match k {
                "side" => side = Some(v.parse::<Side>()?),
                "layers" => layers = Some(v.parse::<LayerSelector>()?),
                "agg" => agg = Some(v.parse::<Aggregation>()?),
                "dim" => {
                    dim = Some(
                        v.parse::<usize>()
                            .map_err(|_| Error::parse(ctx, 1, format!("bad dim {v:?}")))?,
                    )
                }
                _ => return Err(Error::parse(ctx, 1, format!("unknown header key {k:?}"))),
            }
        }
        let missing = || Error::parse(ctx, 1, "header needs side, layers, agg and dim");
        let mut set = RepresentationSet {
            side: side.ok_or_else(missing)?,
            layers: layers.ok_or_else(missing)?,
            aggregation: agg.ok_or_else(missing)?,
            dim: dim.ok_or_else(missing)?,
            sentences: Vec::new(),
        };
        for (n, line) in lines {
            let n = n + 1;
            if line.is_empty() {
                continue;
            }
            let mut cols = line.splitn(4, '\t');
            let mut col = |name: &str| {
                cols.next()
                    .ok_or_else(|| Error::parse(ctx, n, format!("missing {name}")))
            };
            let si: usize = col("sentence id")?
                .parse()
                .map_err(|_| Error::parse(ctx, n, "bad sentence id"))?;
            let wi: usize = col("word index")?
                .parse()
                .map_err(|_| Error::parse(ctx, n, "bad word index"))?;
            let word = col("word")?.to_owned();
            let values = col("values")?
                .split_whitespace()
                .map(|x| {
                    x.parse::<f32>()
                        .map_err(|_| Error::parse(ctx, n, format!("bad value {x:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != set.dim {
                return Err(Error::DimMismatch {
                    context: format!("{ctx}:{n}"),
                    expected: set.dim,
                    found: values.len(),
                });
            }
            if si < set.sentences.len().saturating_sub(1) {
                return Err(Error::parse(ctx, n, "sentence ids must be non-decreasing"));
            }
            while set.sentences.len() <= si {
                set.sentences.push(SentenceVectors {
                    words: Vec::new(),
                    vectors: Vec::new(),
                });
            }
            let s = &mut set.sentences[si];
            if wi != s.words.len() {
                return Err(Error::parse(
                    ctx,
                    n,
                    format!("expected word index {}, found {wi}", s.words.len()),
                ));
            }
            s.words.push(word);
            s.vectors.push(values);
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = crate::corpus::read_to_string(path.as_ref())?;
        Self::from_text(&text)
    }
}

pub fn write_representations(set: &RepresentationSet, path: impl AsRef<Path>) -> Result<()> {
    set.save(path)
}

pub fn read_representations(path: impl AsRef<Path>) -> Result<RepresentationSet> {
    RepresentationSet::load(path)
}
