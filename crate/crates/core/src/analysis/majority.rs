use std::collections::{BTreeMap, HashMap};

use crate::corpus::{RelationCorpus, TaggedCorpus};
use crate::{Error, Result};

/// Most frequent label; ties go to the lexicographically smallest.
fn argmax_label(counts: &BTreeMap<String, usize>) -> String {
    let mut best: Option<(&String, usize)> = None;
    for (label, &n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((label, n));
        }
    }
    best.expect("non-empty counts").0.clone()
}

fn resolve<K: std::hash::Hash + Eq>(
    counts: HashMap<K, BTreeMap<String, usize>>,
) -> HashMap<K, String> {
    counts
        .into_iter()
        .map(|(k, c)| (k, argmax_label(&c)))
        .collect()
}

/// Per-word most frequent tag with a global fallback for unseen words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordMajority {
    pub by_word: HashMap<String, String>,
    pub global: String,
}

pub fn fit_word_majority(train: &TaggedCorpus) -> Result<WordMajority> {
    let mut per: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
    let mut global: BTreeMap<String, usize> = BTreeMap::new();
    for s in &train.sentences {
        for (w, t) in s.sentence.tokens.iter().zip(&s.tags) {
            *per.entry(w.clone())
                .or_default()
                .entry(t.clone())
                .or_default() += 1;
            *global.entry(t.clone()).or_default() += 1;
        }
    }
    if global.is_empty() {
        return Err(Error::Empty("majority training data"));
    }
    Ok(WordMajority {
        by_word: resolve(per),
        global: argmax_label(&global),
    })
}

impl WordMajority {
    pub fn predict(&self, word: &str) -> &str {
        self.by_word.get(word).unwrap_or(&self.global)
    }

    pub fn predict_corpus(&self, test: &TaggedCorpus) -> Vec<String> {
        test.sentences
            .iter()
            .flat_map(|s| s.sentence.tokens.iter().map(|w| self.predict(w).to_owned()))
            .collect()
    }
}

/// Backs off from the (head, modifier) word pair to the modifier alone, then
/// to the global label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMajority {
    pub by_pair: HashMap<(String, String), String>,
    pub by_modifier: HashMap<String, String>,
    pub global: String,
}

pub fn fit_relation_majority(train: &RelationCorpus) -> Result<RelationMajority> {
    let mut pair: HashMap<(String, String), BTreeMap<String, usize>> = HashMap::new();
    let mut modifier: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
    let mut global: BTreeMap<String, usize> = BTreeMap::new();
    for s in &train.sentences {
        let tok = &s.sentence.tokens;
        for r in &s.relations {
            let (h, m) = (tok[r.head].clone(), tok[r.modifier].clone());
            *pair
                .entry((h, m.clone()))
                .or_default()
                .entry(r.label.clone())
                .or_default() += 1;
            *modifier
                .entry(m)
                .or_default()
                .entry(r.label.clone())
                .or_default() += 1;
            *global.entry(r.label.clone()).or_default() += 1;
        }
    }
    if global.is_empty() {
        return Err(Error::Empty("majority training data"));
    }
    Ok(RelationMajority {
        by_pair: resolve(pair),
        by_modifier: resolve(modifier),
        global: argmax_label(&global),
    })
}

impl RelationMajority {
    pub fn predict(&self, head: &str, modifier: &str) -> &str {
        self.by_pair
            .get(&(head.to_owned(), modifier.to_owned()))
            .or_else(|| self.by_modifier.get(modifier))
            .unwrap_or(&self.global)
    }

    pub fn predict_corpus(&self, test: &RelationCorpus) -> Vec<String> {
        test.sentences
            .iter()
            .flat_map(|s| {
                s.relations.iter().map(|r| {
                    self.predict(&s.sentence.tokens[r.head], &s.sentence.tokens[r.modifier])
                        .to_owned()
                })
            })
            .collect()
    }
}

pub fn word_gold(test: &TaggedCorpus) -> Vec<String> {
    test.sentences
        .iter()
        .flat_map(|s| s.tags.iter().cloned())
        .collect()
}

pub fn relation_gold(test: &RelationCorpus) -> Vec<String> {
    test.sentences
        .iter()
        .flat_map(|s| s.relations.iter().map(|r| r.label.clone()))
        .collect()
}

pub fn eval_word_majority(model: &WordMajority, test: &TaggedCorpus) -> Result<f64> {
    crate::probe::accuracy(&word_gold(test), &model.predict_corpus(test))
}

pub fn eval_relation_majority(model: &RelationMajority, test: &RelationCorpus) -> Result<f64> {
    crate::probe::accuracy(&relation_gold(test), &model.predict_corpus(test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_relation_corpus, parse_tagged_corpus};

    #[test]
    fn word_counts_and_fallback() {
        let train =
            parse_tagged_corpus("bank\tN\nbank\tN\nbank\tV\nbank\tN\nrun\tV\n\nx\tN\n", "t")
                .unwrap();
        let m = fit_word_majority(&train).unwrap();
        assert_eq!(m.predict("bank"), "N");
        assert_eq!(m.predict("unseen"), "N");
        assert_eq!(m.predict("run"), "V");
    }

    #[test]
    fn ties_go_to_smallest_tag() {
        let train = parse_tagged_corpus("w\tb\nw\ta\nv\tb\nv\ta\n", "t").unwrap();
        let m = fit_word_majority(&train).unwrap();
        assert_eq!(m.predict("w"), "a");
        assert_eq!(m.global, "a");
    }

    #[test]
    fn relation_backoff() {
        let text = "1\tthe\t2\tdet\n2\tdog\t3\tnsubj\n3\truns\t0\troot\n\n1\tcats\t2\tnsubj\n2\tsee\t0\troot\n3\tdog\t2\tdobj\n";
        let train = parse_relation_corpus(text, "t").unwrap();
        let m = fit_relation_majority(&train).unwrap();
        assert_eq!(m.predict("runs", "dog"), "nsubj");
        assert_eq!(m.predict("see", "dog"), "dobj");
        // unseen pair, seen modifier: tie nsubj/dobj -> dobj
        assert_eq!(m.predict("eats", "dog"), "dobj");
        assert_eq!(m.predict("x", "y"), m.global);
        assert!(fit_relation_majority(&RelationCorpus::default()).is_err());
    }
}
