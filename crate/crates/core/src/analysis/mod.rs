//! Baselines, binned and per-label comparisons, significance testing, BLEU
//! and OOV rates, plus the prediction-file format they read.

mod bins;
mod majority;
mod stats;

use std::path::Path;

pub use bins::{
    binned_accuracy, distance_bin_accuracy, frequency_bin_accuracy, BinResult, BinSpec,
};
pub use majority::{
    eval_relation_majority, eval_word_majority, fit_relation_majority, fit_word_majority,
    relation_gold, word_gold, RelationMajority, WordMajority,
};
pub use stats::{
    approx_randomization, bleu, oov_rate, per_label_layer_delta, LabelDelta, SignificanceResult,
};

use crate::{Error, Result};

/// One line `sentId<TAB>idx<TAB>gold<TAB>predicted`. For relations `idx` is
/// `head-modifier` (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRow {
    pub sentence: usize,
    pub index: String,
    pub gold: String,
    pub predicted: String,
}

impl PredictionRow {
    /// `|head - modifier|` for relation rows.
    pub fn distance(&self) -> Option<u64> {
        let (h, m) = self.index.split_once('-')?;
        Some(h.parse::<u64>().ok()?.abs_diff(m.parse().ok()?))
    }
}

pub fn predictions_to_text(rows: &[PredictionRow]) -> String {
    rows.iter()
        .map(|r| format!("{}\t{}\t{}\t{}\n", r.sentence, r.index, r.gold, r.predicted))
        .collect()
}

pub fn predictions_from_text(text: &str) -> Result<Vec<PredictionRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            let [s, i, g, p] = cols[..] else {
                return Err(Error::parse(
                    "predictions",
                    n + 1,
                    "expected 4 tab-separated columns",
                ));
            };
            Ok(PredictionRow {
                sentence: s
                    .parse()
                    .map_err(|_| Error::parse("predictions", n + 1, "bad sentence id"))?,
                index: i.to_owned(),
                gold: g.to_owned(),
                predicted: p.to_owned(),
            })
        })
        .collect()
}

pub fn write_predictions(rows: &[PredictionRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, predictions_to_text(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>> {
    predictions_from_text(&crate::corpus::read_to_string(path.as_ref())?)
}
