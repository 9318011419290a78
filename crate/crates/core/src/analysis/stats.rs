use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use serde::Serialize;

use crate::numerics::seeded_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignificanceResult {
    /// `|acc(A) - acc(B)|`.
    pub observed: f64,
    pub p_value: f64,
    pub shuffles: usize,
}

/// Approximate randomization test on the absolute accuracy difference:
/// each shuffle swaps the two systems' outputs per item with probability
/// 1/2, and `p = (#{shuffled >= observed} + 1) / (R + 1)`.
pub fn approx_randomization(
    a: &[String],
    b: &[String],
    gold: &[String],
    shuffles: usize,
    seed: u64,
) -> Result<SignificanceResult> {
    if a.len() != gold.len() || b.len() != gold.len() {
        return Err(Error::ShapeMismatch {
            op: "approximate randomization",
            left: vec![a.len(), b.len()],
            right: vec![gold.len()],
        });
    }
    if shuffles == 0 {
        return Err(Error::InvalidArgument(
            "at least one shuffle is required".into(),
        ));
    }
    if gold.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    // Items where both systems agree on correctness never change the
    // difference; only the rest are swapped. Each such item contributes +1
    // (A right) or -1 (B right) to the correct-count difference.
    let signs: Vec<i64> = a
        .iter()
        .zip(b)
        .zip(gold)
        .filter_map(|((x, y), g)| match (x == g, y == g) {
            (true, false) => Some(1),
            (false, true) => Some(-1),
            _ => None,
        })
        .collect();
    let observed: i64 = signs.iter().sum::<i64>().abs();
    let mut rng = seeded_rng(seed);
    let mut at_least = 0usize;
    for _ in 0..shuffles {
        let d: i64 = signs
            .iter()
            .map(|&s| if rng.gen_bool(0.5) { -s } else { s })
            .sum();
        if d.abs() >= observed {
            at_least += 1;
        }
    }
    Ok(SignificanceResult {
        observed: observed as f64 / gold.len() as f64,
        p_value: (at_least + 1) as f64 / (shuffles + 1) as f64,
        shuffles,
    })
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_default() += 1;
        }
    }
    m
}

/// Corpus-level BLEU (n ≤ 4, uniform weights, brevity penalty, no
/// smoothing) on a 0-100 scale.
pub fn bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::ShapeMismatch {
            op: "bleu",
            left: vec![hypotheses.len()],
            right: vec![references.len()],
        });
    }
    if hypotheses.is_empty() {
        return Err(Error::Empty("BLEU corpus"));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let hc = ngrams(h, n);
            let rc = ngrams(r, n);
            total[n - 1] += h.len().saturating_sub(n - 1);
            matched[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = (0..4)
        .map(|i| (matched[i] as f64 / total[i] as f64).ln())
        .sum::<f64>()
        / 4.0;
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * bp * log_p.exp())
}

/// Percentage of test tokens absent from the training vocabulary; 0 for an
/// empty test set.
pub fn oov_rate<'a>(train: &HashSet<String>, test: impl IntoIterator<Item = &'a String>) -> f64 {
    let (mut n, mut oov) = (0usize, 0usize);
    for t in test {
        n += 1;
        oov += !train.contains(t) as usize;
    }
    if n == 0 {
        0.0
    } else {
        100.0 * oov as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelDelta {
    pub label: String,
    pub layer: String,
    pub baseline_accuracy: f64,
    pub accuracy: f64,
    pub delta: f64,
    pub support: usize,
    /// Support differs from the baseline; the delta uses each side's own rows.
    pub flagged: bool,
}

fn per_label(gold: &[String], predicted: &[String]) -> BTreeMap<String, (usize, usize)> {
    let mut m: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        let e = m.entry(g.clone()).or_default();
        e.0 += (g == p) as usize;
        e.1 += 1;
    }
    m
}

/// Per-label accuracy change of every layer relative to `baseline`, sorted
/// by descending delta (then label, then layer). Each entry of `layers` is
/// `(name, gold, predicted)`.
pub fn per_label_layer_delta(
    layers: &[(String, Vec<String>, Vec<String>)],
    baseline: &str,
) -> Result<Vec<LabelDelta>> {
    let base = layers
        .iter()
        .find(|(n, _, _)| n == baseline)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("baseline layer {baseline:?} not among results"))
        })?;
    for (name, g, p) in layers {
        if g.len() != p.len() {
            return Err(Error::ShapeMismatch {
                op: "layer predictions",
                left: vec![g.len()],
                right: vec![p.len()],
            })
            .map_err(|e| Error::InvalidArgument(format!("{name}: {e}")));
        }
    }
    let base_acc = per_label(&base.1, &base.2);
    let mut out = Vec::new();
    for (name, g, p) in layers {
        if name == baseline {
            continue;
        }
        for (label, (c, n)) in per_label(g, p) {
            let Some(&(bc, bn)) = base_acc.get(&label) else {
                continue;
            };
            let (acc, b) = (c as f64 / n as f64, bc as f64 / bn as f64);
            out.push(LabelDelta {
                label,
                layer: name.clone(),
                baseline_accuracy: b,
                accuracy: acc,
                delta: acc - b,
                support: n.min(bn),
                flagged: n != bn,
            });
        }
    }
    out.sort_by(|x, y| {
        y.delta
            .total_cmp(&x.delta)
            .then_with(|| x.label.cmp(&y.label))
            .then_with(|| x.layer.cmp(&y.layer))
    });
    Ok(out)
}
