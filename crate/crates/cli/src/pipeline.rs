//! Pipeline stages. Each stage reads its inputs from the configuration and
//! the output directory, writes its artifacts and returns their paths.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use reprobe_core::analysis::{
    approx_randomization, bleu, eval_relation_majority, eval_word_majority, fit_relation_majority,
    fit_word_majority, oov_rate, per_label_layer_delta, read_predictions, write_predictions,
    BinResult, LabelDelta, PredictionRow,
};
use reprobe_core::analysis::{distance_bin_accuracy, frequency_bin_accuracy};
use reprobe_core::corpus::{
    apply_segmentation, build_vocabulary, desegment, learn_bpe, load_parallel_corpus,
    load_relation_corpus, load_sentences, load_tagged_corpus, Scheme, SegmentationModel, Sentence,
    Vocabulary, SPLIT_MARKER,
};
use reprobe_core::extraction::{
    extract_decoder, extract_encoder, read_representations, write_representations, EncodedSentence,
    LayerSelector, RepresentationSet, Side,
};
use reprobe_core::nmt::{train, translate_greedy, write_training_log, Checkpoint, EncodedPair};
use reprobe_core::probe::{
    build_relation_dataset, build_word_dataset, probe_metrics, train_probe, ProbeDataset, TagScore,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, ProbeKind, ProbeTask, Units};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    BpeLearn,
    Segment,
    TrainNmt,
    Translate,
    Extract,
    Probe,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::BpeLearn,
        Stage::Segment,
        Stage::TrainNmt,
        Stage::Translate,
        Stage::Extract,
        Stage::Probe,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::BpeLearn => "bpe-learn",
            Stage::Segment => "segment",
            Stage::TrainNmt => "train-nmt",
            Stage::Translate => "translate",
            Stage::Extract => "extract",
            Stage::Probe => "probe",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }

    pub fn run(self, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        match self {
            Stage::BpeLearn => bpe_learn(cfg),
            Stage::Segment => segment(cfg),
            Stage::TrainNmt => train_nmt(cfg),
            Stage::Translate => translate(cfg),
            Stage::Extract => extract(cfg),
            Stage::Probe => probe(cfg),
            Stage::Analyze => analyze(cfg),
            Stage::Report => crate::report::report(cfg),
        }
    }
}

/// Fails with a pointer to the command that produces `path`.
fn need(path: &Path, producer: Stage) -> Result<()> {
    if !path.is_file() {
        bail!(
            "missing {}; run `reprobe {} --config <config>` first",
            path.display(),
            producer.name()
        );
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_owned())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn mkdir_for(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Encoder => "src",
        Side::Decoder => "tgt",
    }
}

fn seg_path(cfg: &ExperimentConfig, side: Side) -> PathBuf {
    cfg.out(&format!("segmentation/{}.model", side_name(side)))
}

fn vocab_path(cfg: &ExperimentConfig, side: Side) -> PathBuf {
    cfg.out(&format!("vocab/{}.vocab", side_name(side)))
}

fn data_path(cfg: &ExperimentConfig, split: &str, ext: &str) -> PathBuf {
    cfg.out(&format!("data/{split}.{ext}"))
}

fn checkpoint_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out("nmt/model.ckpt")
}

fn repr_path(cfg: &ExperimentConfig, task: &str, split: &str, layer: LayerSelector) -> PathBuf {
    cfg.out(&format!("repr/{task}.{split}.{layer}.txt"))
}

fn predictions_path(cfg: &ExperimentConfig, task: &str, layer: LayerSelector) -> PathBuf {
    cfg.out(&format!("predictions/{task}.{layer}.tsv"))
}

fn load_segmentation(cfg: &ExperimentConfig, side: Side) -> Result<SegmentationModel> {
    let p = seg_path(cfg, side);
    need(&p, Stage::BpeLearn)?;
    Ok(SegmentationModel::load(&p)?)
}

fn load_vocab(cfg: &ExperimentConfig, side: Side) -> Result<Vocabulary> {
    let p = vocab_path(cfg, side);
    need(&p, Stage::Segment)?;
    Ok(Vocabulary::load(&p)?)
}

fn load_checkpoint(cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let p = checkpoint_path(cfg);
    need(&p, Stage::TrainNmt)?;
    Ok(Checkpoint::load(&p)?)
}

/// Word-level text as segmentation input. With morpheme units an annotated
/// word may carry its morphemes joined by `@@` (`kitap@@lar`); those are
/// split into separate units here.
fn as_unit_input(s: &Sentence, scheme: Scheme) -> Sentence {
    if scheme != Scheme::Morpheme {
        return s.clone();
    }
    let mut units = Vec::new();
    for t in &s.tokens {
        let pieces: Vec<&str> = t.split(SPLIT_MARKER).collect();
        for (i, p) in pieces.iter().enumerate() {
            if i + 1 < pieces.len() {
                units.push(format!("{p}{SPLIT_MARKER}"));
            } else if !p.is_empty() {
                units.push((*p).to_owned());
            }
        }
    }
    Sentence::new(units)
}

fn bpe_learn(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let corpus = load_parallel_corpus(&cfg.train_src, &cfg.train_tgt, cfg.max_len, cfg.max_len)?;
    let mut out = Vec::new();
    for (side, units) in [
        (Side::Encoder, cfg.src_units),
        (Side::Decoder, cfg.tgt_units),
    ] {
        let model = match units {
            Units {
                scheme: Scheme::Bpe,
                bpe_ops,
            } => {
                let text: Vec<Sentence> = match side {
                    Side::Encoder => corpus.sources().cloned().collect(),
                    Side::Decoder => corpus.targets().cloned().collect(),
                };
                learn_bpe(&text, bpe_ops)?
            }
            Units { scheme, .. } => SegmentationModel::fixed(scheme),
        };
        out.push(write(&seg_path(cfg, side), &model.to_text())?);
    }
    Ok(out)
}

fn unit_line(units: &[String]) -> String {
    let mut s = units.join(" ");
    s.push('\n');
    s
}

fn segment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let src_model = load_segmentation(cfg, Side::Encoder)?;
    let tgt_model = load_segmentation(cfg, Side::Decoder)?;
    let mut splits = vec![("train", (cfg.train_src.clone(), cfg.train_tgt.clone()))];
    splits.extend(cfg.valid.clone().map(|p| ("valid", p)));
    splits.extend(cfg.test.clone().map(|p| ("test", p)));

    let mut out = Vec::new();
    let mut train_units: (Vec<Vec<String>>, Vec<Vec<String>>) = Default::default();
    for (split, (src_path, tgt_path)) in splits {
        let corpus = load_parallel_corpus(&src_path, &tgt_path, cfg.max_len, cfg.max_len)?;
        let (mut src_text, mut tgt_text, mut ref_text) =
            (String::new(), String::new(), String::new());
        let mut kept = 0;
        for (s, t) in &corpus.pairs {
            let su = apply_segmentation(s, &src_model)?.units;
            let tu = apply_segmentation(t, &tgt_model)?.units;
            if su.len() > cfg.max_units || tu.len() > cfg.max_units {
                continue;
            }
            kept += 1;
            src_text.push_str(&unit_line(&su));
            tgt_text.push_str(&unit_line(&tu));
            ref_text.push_str(&t.to_line());
            ref_text.push('\n');
            if split == "train" {
                train_units.0.push(su);
                train_units.1.push(tu);
            }
        }
        if kept == 0 {
            bail!(
                "no {split} pairs left after the length caps ({} words, {} units)",
                cfg.max_len,
                cfg.max_units
            );
        }
        out.push(write(&data_path(cfg, split, "src"), &src_text)?);
        out.push(write(&data_path(cfg, split, "tgt"), &tgt_text)?);
        if split == "test" {
            out.push(write(&data_path(cfg, split, "ref"), &ref_text)?);
        }
    }
    for (side, units) in [
        (Side::Encoder, &train_units.0),
        (Side::Decoder, &train_units.1),
    ] {
        let vocab = build_vocabulary(units, cfg.vocab_size)?;
        let p = vocab_path(cfg, side);
        mkdir_for(&p)?;
        vocab.save(&p)?;
        out.push(p);
    }
    Ok(out)
}

fn encoded_split(
    cfg: &ExperimentConfig,
    split: &str,
    vs: &Vocabulary,
    vt: &Vocabulary,
) -> Result<Vec<EncodedPair>> {
    let (sp, tp) = (data_path(cfg, split, "src"), data_path(cfg, split, "tgt"));
    need(&sp, Stage::Segment)?;
    need(&tp, Stage::Segment)?;
    let src = load_sentences(&sp)?;
    let tgt = load_sentences(&tp)?;
    if src.len() != tgt.len() {
        bail!("{} and {} differ in length", sp.display(), tp.display());
    }
    Ok(src
        .iter()
        .zip(&tgt)
        .map(|(s, t)| EncodedPair {
            src: vs.encode(&s.tokens),
            tgt: vt.encode(&t.tokens),
        })
        .collect())
}

fn train_nmt(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let vs = load_vocab(cfg, Side::Encoder)?;
    let vt = load_vocab(cfg, Side::Decoder)?;
    let train_pairs = encoded_split(cfg, "train", &vs, &vt)?;
    let valid_pairs = if cfg.valid.is_some() {
        encoded_split(cfg, "valid", &vs, &vt)?
    } else {
        Vec::new()
    };
    let mut nmt = cfg.nmt.clone();
    nmt.src_vocab_size = vs.len();
    nmt.tgt_vocab_size = vt.len();
    let outcome = train(&nmt, &train_pairs, &valid_pairs)?;
    let ckpt = checkpoint_path(cfg);
    mkdir_for(&ckpt)?;
    outcome.best.save(&ckpt)?;
    let log = cfg.out("nmt/train_log.csv");
    write_training_log(&log, &outcome.log)?;
    Ok(vec![ckpt, log])
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BleuReport {
    pub bleu: f64,
    pub sentences: usize,
    pub units: String,
}

fn translate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    if cfg.test.is_none() {
        bail!("translate needs test_src and test_tgt in the config");
    }
    let vs = load_vocab(cfg, Side::Encoder)?;
    let vt = load_vocab(cfg, Side::Decoder)?;
    let model = load_checkpoint(cfg)?.model;
    let sp = data_path(cfg, "test", "src");
    let rp = data_path(cfg, "test", "ref");
    need(&sp, Stage::Segment)?;
    need(&rp, Stage::Segment)?;
    let refs: Vec<Vec<String>> = load_sentences(&rp)?.into_iter().map(|s| s.tokens).collect();
    let mut hyps = Vec::new();
    let mut text = String::new();
    for s in load_sentences(&sp)? {
        let ids = translate_greedy(&model, &vs.encode(&s.tokens), cfg.max_decode_len)?;
        let words = desegment(&vt.decode(&ids), cfg.tgt_units.scheme);
        text.push_str(&words.to_line());
        text.push('\n');
        hyps.push(words.tokens);
    }
    let hyp_path = write(&cfg.out("translation/test.hyp"), &text)?;
    let report = BleuReport {
        bleu: bleu(&hyps, &refs)?,
        sentences: hyps.len(),
        units: cfg.tgt_units.to_string(),
    };
    let json = write_json(&cfg.out("translation/bleu.json"), &report)?;
    Ok(vec![hyp_path, json])
}

/// Word-level annotation of one split, either flavour.
enum Annotation {
    Word(reprobe_core::corpus::TaggedCorpus),
    Relation(reprobe_core::corpus::RelationCorpus),
}

impl Annotation {
    fn load(task: &ProbeTask, split: &str) -> Result<Self> {
        let path = if split == "train" {
            &task.train
        } else {
            &task.test
        };
        Ok(match task.kind {
            ProbeKind::Word => Annotation::Word(load_tagged_corpus(path)?),
            ProbeKind::Relation => Annotation::Relation(load_relation_corpus(path)?),
        })
    }

    fn sentences(&self) -> Vec<Sentence> {
        match self {
            Annotation::Word(c) => c.plain_sentences(),
            Annotation::Relation(c) => c.plain_sentences(),
        }
    }

    fn dataset(&self, repr: &RepresentationSet, task: &str) -> Result<ProbeDataset> {
        Ok(match self {
            Annotation::Word(c) => build_word_dataset(repr, c, task)?,
            Annotation::Relation(c) => build_relation_dataset(repr, c, task)?,
        })
    }
}

fn encode_sentences(
    sents: &[Sentence],
    model: &SegmentationModel,
    vocab: &Vocabulary,
) -> Result<Vec<EncodedSentence>> {
    sents
        .iter()
        .map(|s| {
            let seg = apply_segmentation(&as_unit_input(s, model.scheme()), model)?;
            if seg.num_words() != s.len() {
                bail!(
                    "segmentation of {:?} yields {} words, expected {}",
                    s.to_line(),
                    seg.num_words(),
                    s.len()
                );
            }
            Ok(EncodedSentence::new(&seg, vocab))
        })
        .collect()
}

fn extract(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let model = load_checkpoint(cfg)?.model;
    let src_seg = load_segmentation(cfg, Side::Encoder)?;
    let tgt_seg = load_segmentation(cfg, Side::Decoder)?;
    let vs = load_vocab(cfg, Side::Encoder)?;
    let vt = load_vocab(cfg, Side::Decoder)?;
    let mut out = Vec::new();
    for task in &cfg.tasks {
        for split in ["train", "test"] {
            let sents = Annotation::load(task, split)?.sentences();
            let sets: Vec<RepresentationSet> = match cfg.side {
                Side::Encoder => {
                    let enc = encode_sentences(&sents, &src_seg, &vs)?;
                    cfg.layers
                        .iter()
                        .map(|&l| extract_encoder(&model, &enc, l, cfg.aggregation))
                        .collect::<reprobe_core::Result<_>>()?
                }
                Side::Decoder => {
                    let sp = if split == "train" {
                        &task.train_source
                    } else {
                        &task.test_source
                    };
                    let sp = sp.as_ref().expect("validated with the config");
                    let src = load_sentences(sp)?;
                    if src.len() != sents.len() {
                        bail!(
                            "{} has {} sentences but the {split} annotation of {} has {}",
                            sp.display(),
                            src.len(),
                            task.name,
                            sents.len()
                        );
                    }
                    let pairs: Vec<(EncodedSentence, EncodedSentence)> =
                        encode_sentences(&src, &src_seg, &vs)?
                            .into_iter()
                            .zip(encode_sentences(&sents, &tgt_seg, &vt)?)
                            .collect();
                    cfg.layers
                        .iter()
                        .map(|&l| {
                            extract_decoder(&model, &pairs, l, cfg.aggregation, cfg.decoder_step)
                        })
                        .collect::<reprobe_core::Result<_>>()?
                }
            };
            for (set, &l) in sets.iter().zip(&cfg.layers) {
                let p = repr_path(cfg, &task.name, split, l);
                mkdir_for(&p)?;
                write_representations(set, &p)?;
                out.push(p);
            }
        }
    }
    Ok(out)
}

fn load_coarse(task: &ProbeTask) -> Result<Option<BTreeMap<String, String>>> {
    let Some(p) = &task.coarse else {
        return Ok(None);
    };
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let mut map = BTreeMap::new();
    for (n, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let (fine, coarse) = line
            .split_once('\t')
            .with_context(|| format!("{}:{}: expected fine<TAB>coarse", p.display(), n + 1))?;
        map.insert(fine.to_owned(), coarse.to_owned());
    }
    Ok(Some(map))
}

fn prediction_rows(ds: &ProbeDataset, predicted: &[String]) -> Vec<PredictionRow> {
    ds.rows
        .iter()
        .zip(&ds.labels)
        .zip(predicted)
        .map(|((r, gold), p)| PredictionRow {
            sentence: r.sentence,
            index: match r.head {
                Some(h) => format!("{h}-{}", r.index),
                None => r.index.to_string(),
            },
            gold: gold.clone(),
            predicted: p.clone(),
        })
        .collect()
}

fn probe(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for task in &cfg.tasks {
        let train_ann = Annotation::load(task, "train")?;
        let test_ann = Annotation::load(task, "test")?;
        let coarse = load_coarse(task)?;
        for &l in &cfg.layers {
            let load = |split: &str| -> Result<RepresentationSet> {
                let p = repr_path(cfg, &task.name, split, l);
                need(&p, Stage::Extract)?;
                Ok(read_representations(&p)?)
            };
            let (train_repr, test_repr) = (load("train")?, load("test")?);
            if train_repr.dim != test_repr.dim {
                bail!(
                    "probe {} layer {l}: train representations have dimension {} but test has {}",
                    task.name,
                    train_repr.dim,
                    test_repr.dim
                );
            }
            let train_ds = train_ann.dataset(&train_repr, &task.name)?;
            let test_ds = test_ann.dataset(&test_repr, &task.name)?;
            let model = train_probe(&train_ds, &cfg.probe)?;
            let (metrics, predicted) = probe_metrics(&model, &test_ds, coarse.as_ref())?;

            let probe_path = cfg.out(&format!("probes/{}.{l}.probe", task.name));
            mkdir_for(&probe_path)?;
            model.save(&task.name, &probe_path)?;
            let pred_path = predictions_path(cfg, &task.name, l);
            mkdir_for(&pred_path)?;
            write_predictions(&prediction_rows(&test_ds, &predicted), &pred_path)?;
            let metrics_path = write_json(
                &cfg.out(&format!("metrics/{}.{l}.json", task.name)),
                &metrics,
            )?;
            out.extend([probe_path, pred_path, metrics_path]);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LayerResult {
    pub layer: String,
    pub accuracy: f64,
    pub per_tag: BTreeMap<String, TagScore>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Binned {
    /// `frequency` (training-corpus count of the word) or `distance`.
    pub statistic: String,
    pub edges: Vec<u64>,
    pub by_layer: BTreeMap<String, Vec<BinResult>>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Significance {
    pub a: String,
    pub b: String,
    pub observed: f64,
    pub p_value: f64,
    pub shuffles: usize,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskAnalysis {
    pub task: String,
    pub kind: String,
    pub side: String,
    pub aggregation: String,
    pub test_rows: usize,
    pub majority_baseline: f64,
    pub oov_rate: f64,
    pub layers: Vec<LayerResult>,
    pub bins: Binned,
    pub deltas: Vec<LabelDelta>,
    pub significance: Vec<Significance>,
}

fn train_word_counts(cfg: &ExperimentConfig) -> Result<HashMap<String, u64>> {
    let path = match cfg.side {
        Side::Encoder => &cfg.train_src,
        Side::Decoder => &cfg.train_tgt,
    };
    let mut counts = HashMap::new();
    for s in load_sentences(path)? {
        for t in s.tokens {
            *counts.entry(t).or_insert(0u64) += 1;
        }
    }
    Ok(counts)
}

fn analyze(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let counts = train_word_counts(cfg)?;
    let vocab: HashSet<String> = counts.keys().cloned().collect();
    let mut out = Vec::new();
    for task in &cfg.tasks {
        let train_ann = Annotation::load(task, "train")?;
        let test_ann = Annotation::load(task, "test")?;
        let mut per_layer: Vec<(String, Vec<PredictionRow>)> = Vec::new();
        for &l in &cfg.layers {
            let p = predictions_path(cfg, &task.name, l);
            need(&p, Stage::Probe)?;
            per_layer.push((l.to_string(), read_predictions(&p)?));
        }
        let rows = &per_layer[0].1;
        let gold: Vec<String> = rows.iter().map(|r| r.gold.clone()).collect();
        for (name, r) in &per_layer {
            if r.len() != rows.len()
                || r.iter()
                    .zip(rows)
                    .any(|(a, b)| a.gold != b.gold || a.index != b.index)
            {
                bail!(
                    "predictions for {} layer {name} do not cover the same test rows",
                    task.name
                );
            }
        }
        let test_words: Vec<String> = test_ann
            .sentences()
            .into_iter()
            .flat_map(|s| s.tokens)
            .collect();

        let (kind, majority) = match (&train_ann, &test_ann) {
            (Annotation::Word(tr), Annotation::Word(te)) => {
                ("word", eval_word_majority(&fit_word_majority(tr)?, te)?)
            }
            (Annotation::Relation(tr), Annotation::Relation(te)) => (
                "relation",
                eval_relation_majority(&fit_relation_majority(tr)?, te)?,
            ),
            _ => unreachable!("both splits share the task kind"),
        };

        let mut layers = Vec::new();
        let mut by_layer = BTreeMap::new();
        let sentences = test_ann.sentences();
        for (name, r) in &per_layer {
            let predicted: Vec<String> = r.iter().map(|x| x.predicted.clone()).collect();
            let f1 = reprobe_core::probe::per_tag_f1(&gold, &predicted, &[], None)?;
            layers.push(LayerResult {
                layer: name.clone(),
                accuracy: reprobe_core::probe::accuracy(&gold, &predicted)?,
                per_tag: f1.per_tag,
            });
            let bins = match task.kind {
                ProbeKind::Word => {
                    let words: Vec<String> = r
                        .iter()
                        .map(|x| {
                            let i: usize = x.index.parse().context("word prediction index")?;
                            sentences
                                .get(x.sentence)
                                .and_then(|s| s.tokens.get(i))
                                .cloned()
                                .with_context(|| {
                                    format!(
                                        "prediction row {} {} outside the test set",
                                        x.sentence, i
                                    )
                                })
                        })
                        .collect::<Result<_>>()?;
                    frequency_bin_accuracy(&predicted, &gold, &words, &counts, &cfg.freq_bins)?
                }
                ProbeKind::Relation => {
                    let d: Vec<u64> = r
                        .iter()
                        .map(|x| {
                            x.distance()
                                .context("relation prediction index is not head-modifier")
                        })
                        .collect::<Result<_>>()?;
                    distance_bin_accuracy(&predicted, &gold, &d, &cfg.distance_bins)?
                }
            };
            by_layer.insert(name.clone(), bins);
        }

        let labelled: Vec<(String, Vec<String>, Vec<String>)> = per_layer
            .iter()
            .map(|(n, r)| {
                (
                    n.clone(),
                    gold.clone(),
                    r.iter().map(|x| x.predicted.clone()).collect(),
                )
            })
            .collect();
        let deltas = per_label_layer_delta(&labelled, &per_layer[0].0)?;
        let mut significance = Vec::new();
        if cfg.significance {
            for w in labelled.windows(2) {
                let r = approx_randomization(&w[0].2, &w[1].2, &gold, cfg.shuffles, cfg.seed)?;
                significance.push(Significance {
                    a: w[0].0.clone(),
                    b: w[1].0.clone(),
                    observed: r.observed,
                    p_value: r.p_value,
                    shuffles: r.shuffles,
                });
            }
        }
        let analysis = TaskAnalysis {
            task: task.name.clone(),
            kind: kind.into(),
            side: cfg.side.to_string(),
            aggregation: cfg.aggregation.to_string(),
            test_rows: gold.len(),
            majority_baseline: majority,
            oov_rate: oov_rate(&vocab, &test_words),
            layers,
            bins: Binned {
                statistic: match task.kind {
                    ProbeKind::Word => "frequency".into(),
                    ProbeKind::Relation => "distance".into(),
                },
                edges: match task.kind {
                    ProbeKind::Word => cfg.freq_bins.edges().to_vec(),
                    ProbeKind::Relation => cfg.distance_bins.edges().to_vec(),
                },
                by_layer,
            },
            deltas,
            significance,
        };
        out.push(write_json(
            &cfg.out(&format!("analysis/{}.json", task.name)),
            &analysis,
        )?);
    }
    Ok(out)
}
