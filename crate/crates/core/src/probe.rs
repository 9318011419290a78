//! Multiclass logistic-regression probes over frozen representations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::corpus::{RelationCorpus, TaggedCorpus};
use crate::extraction::{concat_pair, Aggregation, LayerSelector, RepresentationSet, Side};
use crate::numerics::{
    gemm, seeded_rng, softmax_cross_entropy_batch, Adam, Parameter, Parameterized, Tensor,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            batch_size: 512,
            epochs: 20,
            learning_rate: 1e-3,
            seed: 1,
        }
    }
}

/// Sorted, deduplicated tag inventory; class ids follow the sort order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagMap {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagMap {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = tags.into_iter().map(Into::into).collect();
        let tags: Vec<String> = set.into_iter().collect();
        let index = tags
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TagMap { tags, index }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn id(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

/// Where a dataset's rows came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub task: String,
    pub side: Side,
    pub layers: LayerSelector,
    pub aggregation: Aggregation,
}

/// Per-row origin, used by the binned analyses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowInfo {
    pub sentence: usize,
    /// Word index; the modifier for relation rows.
    pub index: usize,
    pub head: Option<usize>,
    pub word: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    pub dim: usize,
    /// Row-major `[rows × dim]`.
    pub features: Vec<f32>,
    pub labels: Vec<String>,
    pub rows: Vec<RowInfo>,
    pub provenance: Provenance,
}

impl ProbeDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tag_map(&self) -> TagMap {
        TagMap::new(self.labels.iter().cloned())
    }
}

fn provenance(repr: &RepresentationSet, task: &str) -> Provenance {
    Provenance {
        task: task.into(),
        side: repr.side,
        layers: repr.layers,
        aggregation: repr.aggregation,
    }
}

fn check_alignment(
    repr: &RepresentationSet,
    lengths: impl ExactSizeIterator<Item = usize>,
) -> Result<()> {
    if repr.sentences.len() != lengths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} representation sentences but {} annotated sentences",
            repr.sentences.len(),
            lengths.len()
        )));
    }
    for (i, (s, n)) in repr.sentences.iter().zip(lengths).enumerate() {
        if s.vectors.len() != n {
            return Err(Error::InvalidArgument(format!(
                "sentence {i}: {} representations but {n} annotated tokens",
                s.vectors.len()
            )));
        }
    }
    Ok(())
}

/// One row per token.
pub fn build_word_dataset(
    repr: &RepresentationSet,
    corpus: &TaggedCorpus,
    task: &str,
) -> Result<ProbeDataset> {
    check_alignment(repr, corpus.sentences.iter().map(|s| s.tags.len()))?;
    let mut ds = ProbeDataset {
        dim: repr.dim,
        features: Vec::with_capacity(corpus.num_tokens() * repr.dim),
        labels: Vec::with_capacity(corpus.num_tokens()),
        rows: Vec::with_capacity(corpus.num_tokens()),
        provenance: provenance(repr, task),
    };
    for (si, (vecs, ann)) in repr.sentences.iter().zip(&corpus.sentences).enumerate() {
        for (wi, (v, tag)) in vecs.vectors.iter().zip(&ann.tags).enumerate() {
            ds.features.extend_from_slice(v);
            ds.labels.push(tag.clone());
            ds.rows.push(RowInfo {
                sentence: si,
                index: wi,
                head: None,
                word: ann.sentence.tokens[wi].clone(),
            });
        }
    }
    Ok(ds)
}

/// One row per relation, features `[head; modifier]`.
pub fn build_relation_dataset(
    repr: &RepresentationSet,
    corpus: &RelationCorpus,
    task: &str,
) -> Result<ProbeDataset> {
    check_alignment(repr, corpus.sentences.iter().map(|s| s.sentence.len()))?;
    let n = corpus.num_relations();
    let mut ds = ProbeDataset {
        dim: 2 * repr.dim,
        features: Vec::with_capacity(n * 2 * repr.dim),
        labels: Vec::with_capacity(n),
        rows: Vec::with_capacity(n),
        provenance: provenance(repr, task),
    };
    for (si, (vecs, ann)) in repr.sentences.iter().zip(&corpus.sentences).enumerate() {
        for r in &ann.relations {
            ds.features.extend(concat_pair(vecs, r.head, r.modifier)?);
            ds.labels.push(r.label.clone());
            ds.rows.push(RowInfo {
                sentence: si,
                index: r.modifier,
                head: Some(r.head),
                word: ann.sentence.tokens[r.modifier].clone(),
            });
        }
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub tags: TagMap,
    pub dim: usize,
    /// `[classes × dim]`.
    pub weights: Tensor<f64>,
    pub bias: Vec<f64>,
}

fn batch_matrix(ds: &ProbeDataset, idx: &[usize]) -> Tensor<f64> {
    let mut x = Tensor::zeros(&[idx.len(), ds.dim]);
    for (r, &i) in idx.iter().enumerate() {
        for (o, &v) in x.row_mut(r).iter_mut().zip(ds.row(i)) {
            *o = v as f64;
        }
    }
    x
}

/// Trainable probe weights `W [C×D]` and bias `b [C]`.
#[derive(Debug, Clone)]
pub struct ProbeParameters {
    pub w: Parameter<f64>,
    pub b: Parameter<f64>,
}

impl ProbeParameters {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        ProbeParameters {
            w: Parameter::new("probe.w", Tensor::zeros(&[classes, dim])),
            b: Parameter::new("probe.b", Tensor::zeros(&[classes])),
        }
    }

    /// Mean cross-entropy of `softmax(x·Wᵀ + b)` over the rows of `x`; with
    /// `backward` the gradient is accumulated into `w.grad` and `b.grad`.
    pub fn batch_loss(
        &mut self,
        x: &Tensor<f64>,
        targets: &[usize],
        backward: bool,
    ) -> Result<f64> {
        let (n, classes) = (x.rows(), self.b.value.len());
        if targets.len() != n || x.cols() != self.w.value.cols() {
            return Err(Error::ShapeMismatch {
                op: "probe batch",
                left: x.shape().to_vec(),
                right: vec![targets.len(), self.w.value.cols()],
            });
        }
        let mut logits = Tensor::zeros(&[n, classes]);
        for r in 0..n {
            logits.row_mut(r).copy_from_slice(self.b.value.data());
        }
        gemm(1.0, x, false, &self.w.value, true, 1.0, &mut logits)?;
        let ones = vec![1.0; n];
        let scale = 1.0 / n as f64;
        let (total, dl) = softmax_cross_entropy_batch(&logits, targets, &ones, scale)?;
        if backward {
            gemm(1.0, &dl, true, x, false, 1.0, &mut self.w.grad)?;
            for r in 0..n {
                for (g, &d) in self.b.grad.data_mut().iter_mut().zip(dl.row(r)) {
                    *g += d;
                }
            }
        }
        Ok(total * scale)
    }
}

impl Parameterized<f64> for ProbeParameters {
    fn parameters(&self) -> Vec<&Parameter<f64>> {
        vec![&self.w, &self.b]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Zero-initialized weights, shuffled minibatch Adam for exactly
/// `config.epochs` epochs.
pub fn train_probe(ds: &ProbeDataset, config: &ProbeConfig) -> Result<ProbeModel> {
    if ds.is_empty() {
        return Err(Error::Empty("probe training set"));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidArgument(
            "probe batch size and epochs must be positive".into(),
        ));
    }
    let tags = ds.tag_map();
    let targets: Vec<usize> = ds
        .labels
        .iter()
        .map(|t| tags.id(t).expect("tag map built from labels"))
        .collect();
    let mut params = ProbeParameters::zeros(tags.len(), ds.dim);
    let mut adam = Adam::new(config.learning_rate);
    let mut rng = seeded_rng(config.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            let x = batch_matrix(ds, idx);
            let t: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            params.zero_grad();
            params.batch_loss(&x, &t, true)?;
            let ProbeParameters { w, b } = &mut params;
            adam.step(&mut [w, b]);
        }
    }
    params.w.value.check_finite("probe weights")?;
    Ok(ProbeModel {
        tags,
        dim: ds.dim,
        weights: params.w.value,
        bias: params.b.value.into_data(),
    })
}

/// Feature rows of `ds` selected by `idx`, widened to f64.
pub fn feature_matrix(ds: &ProbeDataset, idx: &[usize]) -> Tensor<f64> {
    batch_matrix(ds, idx)
}

impl ProbeModel {
    /// Class scores for one feature row.
    pub fn scores(&self, x: &[f32]) -> Vec<f64> {
        (0..self.tags.len())
            .map(|c| {
                self.bias[c]
                    + self
                        .weights
                        .row(c)
                        .iter()
                        .zip(x)
                        .map(|(&w, &v)| w * v as f64)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Argmax class id; ties go to the lowest id.
    pub fn predict_id(&self, x: &[f32]) -> usize {
        argmax(&self.scores(x))
    }

    pub fn predict(&self, ds: &ProbeDataset) -> Result<Vec<String>> {
        if ds.dim != self.dim {
            return Err(Error::DimMismatch {
                context: "probe input".into(),
                expected: self.dim,
                found: ds.dim,
            });
        }
        Ok((0..ds.len())
            .map(|i| self.tags.tag(self.predict_id(ds.row(i))).to_owned())
            .collect())
    }

    pub fn to_text(&self, task: &str) -> String {
        let mut s = format!("task={task} dim={} classes={}\n", self.dim, self.tags.len());
        for (c, tag) in self.tags.tags().iter().enumerate() {
            s.push_str(tag);
            s.push('\t');
            s.push_str(&self.bias[c].to_string());
            s.push('\t');
            let row: Vec<String> = self.weights.row(c).iter().map(f64::to_string).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Returns the model and its task name.
    pub fn from_text(text: &str) -> Result<(Self, String)> {
        let ctx = "probe model";
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(ctx, 1, "missing header"))?;
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for f in header.split_whitespace() {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| Error::parse(ctx, 1, format!("bad header field {f:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::parse(ctx, 1, format!("missing {k}")))
        };
        let task = get("task")?.to_owned();
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::parse(ctx, 1, format!("bad {k}")))
        };
        let (dim, classes) = (num("dim")?, num("classes")?);
        let mut tags = Vec::with_capacity(classes);
        let mut bias = Vec::with_capacity(classes);
        let mut weights = Vec::with_capacity(classes * dim);
        for (n, line) in lines.enumerate() {
            let n = n + 2;
            let mut cols = line.splitn(3, '\t');
            let (Some(tag), Some(b), Some(w)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::parse(ctx, n, "expected tag, bias and weights"));
            };
            tags.push(tag.to_owned());
            bias.push(
                b.parse::<f64>()
                    .map_err(|_| Error::parse(ctx, n, "bad bias"))?,
            );
            let row = w
                .split_whitespace()
                .map(|x| {
                    x.parse::<f64>()
                        .map_err(|_| Error::parse(ctx, n, "bad weight"))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    context: format!("{ctx}:{n}"),
                    expected: dim,
                    found: row.len(),
                });
            }
            weights.extend(row);
        }
        if tags.len() != classes {
            return Err(Error::Format(format!(
                "{ctx}: header says {classes} classes, found {}",
                tags.len()
            )));
        }
        let map = TagMap::new(tags.iter().cloned());
        if map.tags() != tags.as_slice() {
            return Err(Error::Format(format!(
                "{ctx}: tags must be sorted and unique"
            )));
        }
        Ok((
            ProbeModel {
                tags: map,
                dim,
                weights: Tensor::from_vec(&[classes, dim], weights)?,
                bias,
            },
            task,
        ))
    }

    pub fn save(&self, task: &str, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text(task)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        Self::from_text(&crate::corpus::read_to_string(path.as_ref())?)
    }
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Fraction of exact tag matches. Gold tags the probe never saw cannot match.
pub fn accuracy(gold: &[String], predicted: &[String]) -> Result<f64> {
    if gold.len() != predicted.len() {
        return Err(Error::ShapeMismatch {
            op: "accuracy",
            left: vec![gold.len()],
            right: vec![predicted.len()],
        });
    }
    if gold.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let correct = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
    Ok(correct as f64 / gold.len() as f64)
}

pub fn evaluate_accuracy(probe: &ProbeModel, ds: &ProbeDataset) -> Result<f64> {
    accuracy(&ds.labels, &probe.predict(ds)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagScore {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// `None` when the tag occurs neither in gold nor in predictions.
    pub f1: Option<f64>,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Report {
    pub per_tag: BTreeMap<String, TagScore>,
    /// Micro-averaged F1 inside each coarse group.
    pub coarse: BTreeMap<String, Option<f64>>,
    pub micro_f1: f64,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn f1(self) -> Option<f64> {
        if self.tp + self.fp + self.fn_ == 0 {
            return None;
        }
        Some(2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64)
    }
}

/// One-vs-rest precision, recall and F1 per tag over `tags ∪ gold ∪ predicted`.
/// With `coarse`, fine tags are grouped and micro-averaged; unmapped tags
/// form their own group.
pub fn per_tag_f1(
    gold: &[String],
    predicted: &[String],
    tags: &[String],
    coarse: Option<&BTreeMap<String, String>>,
) -> Result<F1Report> {
    accuracy(gold, predicted)?;
    let mut counts: BTreeMap<String, Counts> = tags
        .iter()
        .map(|t| (t.clone(), Counts::default()))
        .collect();
    for (g, p) in gold.iter().zip(predicted) {
        if g == p {
            counts.entry(g.clone()).or_default().tp += 1;
        } else {
            counts.entry(g.clone()).or_default().fn_ += 1;
            counts.entry(p.clone()).or_default().fp += 1;
        }
    }
    let per_tag = counts
        .iter()
        .map(|(t, c)| {
            let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
            let support = c.tp + c.fn_;
            let predicted = c.tp + c.fp;
            let score = TagScore {
                precision: ratio(c.tp, predicted).or((support > 0).then_some(0.0)),
                recall: ratio(c.tp, support),
                f1: c.f1(),
                support,
                predicted,
            };
            (t.clone(), score)
        })
        .collect();
    let mut groups: BTreeMap<String, Counts> = BTreeMap::new();
    if let Some(map) = coarse {
        for (t, c) in &counts {
            let g = groups.entry(map.get(t).unwrap_or(t).clone()).or_default();
            g.tp += c.tp;
            g.fp += c.fp;
            g.fn_ += c.fn_;
        }
    }
    let total = counts.values().fold(Counts::default(), |a, c| Counts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    Ok(F1Report {
        per_tag,
        coarse: groups.into_iter().map(|(g, c)| (g, c.f1())).collect(),
        micro_f1: total.f1().unwrap_or(0.0),
    })
}

/// Serializable summary of one probe evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProbeMetrics {
    pub task: String,
    pub side: String,
    pub layers: String,
    pub aggregation: String,
    pub accuracy: f64,
    pub per_tag: BTreeMap<String, TagScore>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub coarse_f1: BTreeMap<String, Option<f64>>,
}

pub fn probe_metrics(
    probe: &ProbeModel,
    ds: &ProbeDataset,
    coarse: Option<&BTreeMap<String, String>>,
) -> Result<(ProbeMetrics, Vec<String>)> {
    let predicted = probe.predict(ds)?;
    let acc = accuracy(&ds.labels, &predicted)?;
    let f1 = per_tag_f1(&ds.labels, &predicted, probe.tags.tags(), coarse)?;
    let p = &ds.provenance;
    Ok((
        ProbeMetrics {
            task: p.task.clone(),
            side: p.side.to_string(),
            layers: p.layers.to_string(),
            aggregation: p.aggregation.to_string(),
            accuracy: acc,
            per_tag: f1.per_tag,
            coarse_f1: f1.coarse,
        },
        predicted,
    ))
}
