use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Dense unit ↔ id mapping with four reserved ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    units: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_entries(entries: Vec<(String, u64)>) -> Self {
        let mut units: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0; RESERVED.len()];
        for (u, c) in entries {
            units.push(u);
            counts.push(c);
        }
        let index = units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
        Vocabulary {
            units,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, unit: &str) -> usize {
        self.index.get(unit).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, unit: &str) -> bool {
        self.index.get(unit).is_some_and(|&i| i >= RESERVED.len())
    }

    pub fn unit(&self, id: usize) -> &str {
        self.units.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    /// Training-corpus frequency of a kept unit (0 for reserved ids).
    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn encode<S: AsRef<str>>(&self, units: &[S]) -> Vec<usize> {
        units.iter().map(|u| self.id(u.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.unit(i).to_owned()).collect()
    }

    /// One `unit<TAB>count` line per id, reserved entries included.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (u, c) in self.units.iter().zip(&self.counts) {
            let _ = writeln!(out, "{u}\t{c}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (u, c) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("vocabulary", n + 1, "expected unit<TAB>count"))?;
            let c: u64 = c
                .parse()
                .map_err(|_| Error::parse("vocabulary", n + 1, format!("bad count {c:?}")))?;
            if n < RESERVED.len() {
                if u != RESERVED[n] {
                    return Err(Error::parse(
                        "vocabulary",
                        n + 1,
                        "reserved entry out of place",
                    ));
                }
                continue;
            }
            entries.push((u.to_owned(), c));
        }
        Ok(Vocabulary::from_entries(entries))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Vocabulary::from_text(&super::read_to_string(path.as_ref())?)
    }
}

/// Keeps the `max_size - 4` most frequent units; equal counts are ordered by
/// first occurrence.
pub fn build_vocabulary<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize) -> Result<Vocabulary> {
    if max_size < RESERVED.len() {
        return Err(Error::InvalidArgument(format!(
            "vocabulary size {max_size} leaves no room for the 4 reserved ids"
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut freq: HashMap<&str, (u64, usize)> = HashMap::new();
    for unit in corpus.iter().flatten() {
        let unit = unit.as_ref();
        if RESERVED.contains(&unit) {
            continue;
        }
        let next = order.len();
        let e = freq.entry(unit).or_insert_with(|| (0, next));
        if e.1 == next {
            order.push(unit.to_owned());
        }
        e.0 += 1;
    }
    if order.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut ranked: Vec<(String, u64)> = order
        .into_iter()
        .map(|u| {
            let c = freq[u.as_str()].0;
            (u, c)
        })
        .collect();
    // stable: ties keep first-occurrence order
    ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
    ranked.truncate(max_size - RESERVED.len());
    Ok(Vocabulary::from_entries(ranked))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_owned).collect())
            .collect()
    }

    #[test]
    fn reserved_then_frequency() {
        let v = build_vocabulary(&corpus(&["a a b"]), 6).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("<pad>"), PAD);
        assert_eq!(v.id("<unk>"), UNK);
        assert_eq!(v.id("<s>"), BOS);
        assert_eq!(v.id("</s>"), EOS);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
        assert_eq!(v.count(v.id("a")), 2);
    }

    #[test]
    fn cap_excludes_rarest() {
        let v = build_vocabulary(&corpus(&["a a b"]), 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("b"), UNK);
        assert!(!v.contains("b"));
    }

    #[test]
    fn tie_keeps_first_occurrence() {
        let v = build_vocabulary(&corpus(&["a b"]), 5).unwrap();
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);
    }

    #[test]
    fn errors() {
        assert!(build_vocabulary::<String>(&[], 10).is_err());
        assert!(build_vocabulary(&corpus(&["a"]), 3).is_err());
    }

    #[test]
    fn text_round_trip() {
        let v = build_vocabulary(&corpus(&["x y y z", "z z"]), 100).unwrap();
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn oracle_stable_sort() {
        // brute-force: rank by (-freq, first position)
        let c = corpus(&["c b a b c d", "e a d d"]);
        let flat: Vec<&String> = c.iter().flatten().collect();
        let mut types: Vec<&String> = Vec::new();
        for t in &flat {
            if !types.contains(t) {
                types.push(t);
            }
        }
        let mut keyed: Vec<(i64, usize, &String)> = types
            .iter()
            .map(|t| {
                let f = flat.iter().filter(|x| *x == t).count() as i64;
                let first = flat.iter().position(|x| x == t).unwrap();
                (-f, first, *t)
            })
            .collect();
        keyed.sort();
        let v = build_vocabulary(&c, 4 + keyed.len()).unwrap();
        for (rank, (_, _, t)) in keyed.iter().enumerate() {
            assert_eq!(v.id(t), 4 + rank);
        }
    }
}
