use std::collections::HashMap;

use serde::Serialize;

use crate::{Error, Result};

/// Bins over a non-negative integer statistic, given by ascending lower
/// edges. Bin `i` covers `[edges[i], edges[i+1])`; the last bin is open.
/// Values below the first edge fall in no bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinSpec {
    edges: Vec<u64>,
}

impl BinSpec {
    pub fn new(edges: Vec<u64>) -> Result<Self> {
        if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "bin edges must be non-empty and strictly increasing: {edges:?}"
            )));
        }
        Ok(BinSpec { edges })
    }

    /// `0` (OOV), `1-5`, `6-10`, `11-20`, `21-50`, `51-100`, `>100`.
    pub fn frequency_default() -> Self {
        BinSpec::new(vec![0, 1, 6, 11, 21, 51, 101]).unwrap()
    }

    /// `1`, `2`, `3-5`, `6-10`, `>10`.
    pub fn distance_default() -> Self {
        BinSpec::new(vec![1, 2, 3, 6, 11]).unwrap()
    }

    pub fn edges(&self) -> &[u64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, value: u64) -> Option<usize> {
        if value < self.edges[0] {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= value) - 1)
    }

    pub fn label(&self, i: usize) -> String {
        let lo = self.edges[i];
        match self.edges.get(i + 1) {
            Some(&next) if next == lo + 1 => lo.to_string(),
            Some(&next) => format!("{lo}-{}", next - 1),
            None if lo == 0 => "all".into(),
            None => format!(">{}", lo - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinResult {
    pub label: String,
    pub support: usize,
    pub correct: usize,
    /// `None` for empty bins.
    pub accuracy: Option<f64>,
}

/// Per-bin accuracy of `correct[i]`, keyed by `values[i]`.
pub fn binned_accuracy(values: &[u64], correct: &[bool], spec: &BinSpec) -> Result<Vec<BinResult>> {
    if values.len() != correct.len() {
        return Err(Error::ShapeMismatch {
            op: "binned accuracy",
            left: vec![values.len()],
            right: vec![correct.len()],
        });
    }
    let mut counts = vec![(0usize, 0usize); spec.len()];
    for (&v, &c) in values.iter().zip(correct) {
        if let Some(i) = spec.index(v) {
            counts[i].0 += 1;
            counts[i].1 += c as usize;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, (support, correct))| BinResult {
            label: spec.label(i),
            support,
            correct,
            accuracy: (support > 0).then(|| correct as f64 / support as f64),
        })
        .collect())
}

fn correctness(predicted: &[String], gold: &[String]) -> Result<Vec<bool>> {
    if predicted.len() != gold.len() {
        return Err(Error::ShapeMismatch {
            op: "predictions",
            left: vec![predicted.len()],
            right: vec![gold.len()],
        });
    }
    Ok(predicted.iter().zip(gold).map(|(p, g)| p == g).collect())
}

/// Bins test tokens by their training-corpus frequency (0 when unseen).
pub fn frequency_bin_accuracy(
    predicted: &[String],
    gold: &[String],
    words: &[String],
    train_frequency: &HashMap<String, u64>,
    spec: &BinSpec,
) -> Result<Vec<BinResult>> {
    let freq: Vec<u64> = words
        .iter()
        .map(|w| train_frequency.get(w).copied().unwrap_or(0))
        .collect();
    binned_accuracy(&freq, &correctness(predicted, gold)?, spec)
}

/// Bins relations by `|head - modifier|`.
pub fn distance_bin_accuracy(
    predicted: &[String],
    gold: &[String],
    distances: &[u64],
    spec: &BinSpec,
) -> Result<Vec<BinResult>> {
    binned_accuracy(distances, &correctness(predicted, gold)?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_labels() {
        let f = BinSpec::frequency_default();
        let labels: Vec<String> = (0..f.len()).map(|i| f.label(i)).collect();
        assert_eq!(
            labels,
            ["0", "1-5", "6-10", "11-20", "21-50", "51-100", ">100"]
        );
        let d = BinSpec::distance_default();
        let labels: Vec<String> = (0..d.len()).map(|i| d.label(i)).collect();
        assert_eq!(labels, ["1", "2", "3-5", "6-10", ">10"]);
    }

    #[test]
    fn index_boundaries() {
        let f = BinSpec::frequency_default();
        assert_eq!(f.index(0), Some(0));
        assert_eq!(f.index(5), Some(1));
        assert_eq!(f.index(6), Some(2));
        assert_eq!(f.index(100), Some(5));
        assert_eq!(f.index(101), Some(6));
        assert_eq!(BinSpec::distance_default().index(0), None);
        assert!(BinSpec::new(vec![1, 1]).is_err());
    }

    #[test]
    fn all_oov_lands_in_bin_zero() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let r = frequency_bin_accuracy(
            &s(&["A", "B"]),
            &s(&["A", "C"]),
            &s(&["x", "y"]),
            &HashMap::new(),
            &BinSpec::frequency_default(),
        )
        .unwrap();
        assert_eq!(r[0].support, 2);
        assert_eq!(r[0].accuracy, Some(0.5));
        assert!(r[1..].iter().all(|b| b.accuracy.is_none()));
    }
}
