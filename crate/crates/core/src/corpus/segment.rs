use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use super::bpe::{initial_symbols, END_OF_WORD};
use super::Sentence;
use crate::{Error, Result};

/// Suffix on every non-final subword unit of a word.
pub const SPLIT_MARKER: &str = "@@";
/// Character-scheme unit separating two words.
pub const CHAR_BOUNDARY: &str = "_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Word,
    Char,
    Bpe,
    /// Text that arrives already split into `@@`-marked morphemes.
    Morpheme,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Word => "word",
            Scheme::Char => "char",
            Scheme::Bpe => "bpe",
            Scheme::Morpheme => "morpheme",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Scheme::Word),
            "char" => Ok(Scheme::Char),
            "bpe" => Ok(Scheme::Bpe),
            "morpheme" => Ok(Scheme::Morpheme),
            other => Err(Error::InvalidArgument(format!(
                "unknown unit scheme {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegmentationModel {
    scheme: Scheme,
    merges: Vec<(String, String)>,
    ranks: HashMap<String, usize>,
}

impl PartialEq for SegmentationModel {
    fn eq(&self, other: &Self) -> bool {
        self.scheme == other.scheme && self.merges == other.merges
    }
}

fn rank_key(a: &str, b: &str) -> String {
    format!("{a} {b}")
}

impl SegmentationModel {
    /// Model for the schemes that need no learned state.
    pub fn fixed(scheme: Scheme) -> Self {
        SegmentationModel {
            scheme,
            merges: Vec::new(),
            ranks: HashMap::new(),
        }
    }

    pub fn bpe(merges: Vec<(String, String)>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, (a, b))| (rank_key(a, b), i))
            .collect();
        SegmentationModel {
            scheme: Scheme::Bpe,
            merges,
            ranks,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Header `<scheme> <numOps>` followed by one space-separated merge per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.scheme, self.merges.len());
        for (a, b) in &self.merges {
            out.push_str(a);
            out.push(' ');
            out.push_str(b);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("segmentation model", 1, "missing header"))?;
        let (scheme, count) = header
            .split_once(' ')
            .ok_or_else(|| Error::parse("segmentation model", 1, "expected '<scheme> <numOps>'"))?;
        let scheme: Scheme = scheme.parse()?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| Error::parse("segmentation model", 1, "bad merge count"))?;
        let mut merges = Vec::with_capacity(count);
        for (n, line) in lines.enumerate() {
            let mut it = line.split(' ');
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    merges.push((a.to_owned(), b.to_owned()))
                }
                _ => return Err(Error::parse("segmentation model", n + 2, "expected 'a b'")),
            }
        }
        if merges.len() != count {
            return Err(Error::Format(format!(
                "segmentation model declares {count} merges but lists {}",
                merges.len()
            )));
        }
        if scheme != Scheme::Bpe {
            if count != 0 {
                return Err(Error::Format(format!("{scheme} model cannot carry merges")));
            }
            return Ok(SegmentationModel::fixed(scheme));
        }
        Ok(SegmentationModel::bpe(merges))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SegmentationModel::from_text(&super::read_to_string(path.as_ref())?)
    }

    /// BPE units of a single word, markers included.
    fn bpe_word(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&rank_key(&w[0], &w[1])).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == a && &symbols[i + 1] == b {
                    out.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = out;
        }
        let n = symbols.len();
        symbols
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if i + 1 == n {
                    s.strip_suffix(END_OF_WORD).unwrap_or(&s).to_owned()
                } else {
                    format!("{s}{SPLIT_MARKER}")
                }
            })
            .collect()
    }
}

/// Units of one sentence plus the unit range covering each original word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedSentence {
    pub scheme: Scheme,
    pub units: Vec<String>,
    pub spans: Vec<Range<usize>>,
}

impl SegmentedSentence {
    pub fn num_words(&self) -> usize {
        self.spans.len()
    }

    /// Surface form of word `i`, markers stripped.
    pub fn word(&self, i: usize) -> String {
        let span = self.spans[i].clone();
        strip_markers(&self.units[span], self.scheme)
    }

    pub fn words(&self) -> Vec<String> {
        (0..self.spans.len()).map(|i| self.word(i)).collect()
    }

    /// Spans must be non-empty, contiguous, in order and cover every unit.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for (i, s) in self.spans.iter().enumerate() {
            if s.start != next || s.end <= s.start {
                return Err(Error::Invariant(format!(
                    "word span {i} = {s:?} is not contiguous"
                )));
            }
            next = s.end;
        }
        if next != self.units.len() {
            return Err(Error::Invariant(format!(
                "spans cover {next} of {} units",
                self.units.len()
            )));
        }
        Ok(())
    }
}

fn strip_markers(units: &[String], scheme: Scheme) -> String {
    let mut out = String::new();
    for u in units {
        match scheme {
            Scheme::Char if u == CHAR_BOUNDARY => {}
            Scheme::Bpe | Scheme::Morpheme => {
                out.push_str(u.strip_suffix(SPLIT_MARKER).unwrap_or(u))
            }
            _ => out.push_str(u),
        }
    }
    out
}

/// Splits a sentence into translation units and records each word's span.
///
/// For [`Scheme::Morpheme`] the sentence tokens are the pre-segmented
/// morphemes themselves; a word continues while its unit ends in `@@`.
/// For [`Scheme::Char`] the boundary unit `_` in front of every word but the
/// first belongs to that word's span.
pub fn apply_segmentation(
    sentence: &Sentence,
    model: &SegmentationModel,
) -> Result<SegmentedSentence> {
    let mut units = Vec::new();
    let mut spans = Vec::new();
    match model.scheme {
        Scheme::Word => {
            for (i, t) in sentence.tokens.iter().enumerate() {
                units.push(t.clone());
                spans.push(i..i + 1);
            }
        }
        Scheme::Char => {
            for (i, t) in sentence.tokens.iter().enumerate() {
                let start = units.len();
                if i > 0 {
                    units.push(CHAR_BOUNDARY.to_owned());
                }
                units.extend(t.chars().map(|c| c.to_string()));
                spans.push(start..units.len());
            }
        }
        Scheme::Bpe => {
            for t in &sentence.tokens {
                let start = units.len();
                units.extend(model.bpe_word(t));
                spans.push(start..units.len());
            }
        }
        Scheme::Morpheme => {
            let mut start = 0;
            for (i, t) in sentence.tokens.iter().enumerate() {
                units.push(t.clone());
                if !t.ends_with(SPLIT_MARKER) {
                    spans.push(start..i + 1);
                    start = i + 1;
                }
            }
            if start != units.len() {
                return Err(Error::Format(format!(
                    "dangling {SPLIT_MARKER:?} at end of morpheme-segmented sentence {:?}",
                    sentence.to_line()
                )));
            }
        }
    }
    Ok(SegmentedSentence {
        scheme: model.scheme,
        units,
        spans,
    })
}

/// Rebuilds words from a unit sequence using the scheme's marker rules.
///
/// Lenient by design of its callers (decoded hypotheses): a trailing `@@`
/// closes the word and empty words produced by repeated boundaries vanish.
pub fn desegment<S: AsRef<str>>(units: &[S], scheme: Scheme) -> Sentence {
    let mut words = Vec::new();
    match scheme {
        Scheme::Word => words.extend(units.iter().map(|u| u.as_ref().to_owned())),
        Scheme::Char => {
            let mut cur = String::new();
            for u in units {
                let u = u.as_ref();
                if u == CHAR_BOUNDARY {
                    if !cur.is_empty() {
                        words.push(std::mem::take(&mut cur));
                    }
                } else {
                    cur.push_str(u);
                }
            }
            if !cur.is_empty() {
                words.push(cur);
            }
        }
        Scheme::Bpe | Scheme::Morpheme => {
            let mut cur = String::new();
            for u in units {
                let u = u.as_ref();
                match u.strip_suffix(SPLIT_MARKER) {
                    Some(stem) => cur.push_str(stem),
                    None => {
                        cur.push_str(u);
                        words.push(std::mem::take(&mut cur));
                    }
                }
            }
            if !cur.is_empty() {
                words.push(cur);
            }
        }
    }
    Sentence::new(words)
}
