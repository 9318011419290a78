//! Corpus ingestion, vocabularies and segmentation into translation units.

mod annotations;
mod bpe;
mod segment;
mod vocab;

pub use annotations::{
    load_relation_corpus, load_tagged_corpus, parse_relation_corpus, parse_tagged_corpus, Relation,
    RelationCorpus, RelationSentence, TaggedCorpus, TaggedSentence,
};
pub use bpe::{learn_bpe, END_OF_WORD};
pub use segment::{
    apply_segmentation, desegment, Scheme, SegmentationModel, SegmentedSentence, CHAR_BOUNDARY,
    SPLIT_MARKER,
};
pub use vocab::{build_vocabulary, Vocabulary, BOS, EOS, PAD, UNK};

use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// A whitespace-tokenized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Self {
        Sentence { tokens }
    }

    /// Splits a line on ASCII/Unicode whitespace.
    pub fn parse(line: &str) -> Self {
        Sentence {
            tokens: line.split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_line(&self) -> String {
        self.tokens.join(" ")
    }
}

impl From<&str> for Sentence {
    fn from(line: &str) -> Self {
        Sentence::parse(line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParallelCorpus {
    pub pairs: Vec<(Sentence, Sentence)>,
    pub src_lang: Option<String>,
    pub tgt_lang: Option<String>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|(s, _)| s)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|(_, t)| t)
    }

    /// Concatenates corpora, e.g. several prefixed language pairs into one
    /// multilingual training set.
    pub fn concat(corpora: impl IntoIterator<Item = ParallelCorpus>) -> ParallelCorpus {
        let mut pairs = Vec::new();
        for c in corpora {
            pairs.extend(c.pairs);
        }
        ParallelCorpus {
            pairs,
            src_lang: None,
            tgt_lang: None,
        }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads one sentence per line from a UTF-8 text file.
pub fn load_sentences(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let text = read_to_string(path.as_ref())?;
    Ok(text.lines().map(Sentence::parse).collect())
}

/// Loads a sentence-aligned corpus, dropping pairs where either side is empty
/// or longer than its cap (in tokens). Order is preserved.
pub fn load_parallel_corpus(
    src_path: impl AsRef<Path>,
    tgt_path: impl AsRef<Path>,
    max_len_src: usize,
    max_len_tgt: usize,
) -> Result<ParallelCorpus> {
    let src = load_sentences(src_path)?;
    let tgt = load_sentences(tgt_path)?;
    parallel_from_sentences(src, tgt, max_len_src, max_len_tgt)
}

pub fn parallel_from_sentences(
    src: Vec<Sentence>,
    tgt: Vec<Sentence>,
    max_len_src: usize,
    max_len_tgt: usize,
) -> Result<ParallelCorpus> {
    if src.len() != tgt.len() {
        return Err(Error::LineCountMismatch {
            src: src.len(),
            tgt: tgt.len(),
        });
    }
    let pairs = src
        .into_iter()
        .zip(tgt)
        .filter(|(s, t)| within_cap(s, max_len_src) && within_cap(t, max_len_tgt))
        .collect();
    Ok(ParallelCorpus {
        pairs,
        src_lang: None,
        tgt_lang: None,
    })
}

fn within_cap(s: &Sentence, cap: usize) -> bool {
    !s.is_empty() && s.len() <= cap
}

/// Prepends the target-language token `<2code>` to every source sentence and
/// re-applies the source length cap.
///
/// Not idempotent: applying it twice yields two prefix tokens.
pub fn add_language_prefix(
    corpus: &ParallelCorpus,
    code: &str,
    max_len_src: usize,
) -> Result<ParallelCorpus> {
    if code.is_empty() || code.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!(
            "language code must be non-empty without whitespace, got {code:?}"
        )));
    }
    let prefix = format!("<2{code}>");
    let pairs = corpus
        .pairs
        .iter()
        .map(|(s, t)| {
            let mut tokens = Vec::with_capacity(s.len() + 1);
            tokens.push(prefix.clone());
            tokens.extend(s.tokens.iter().cloned());
            (Sentence::new(tokens), t.clone())
        })
        .filter(|(s, _)| s.len() <= max_len_src)
        .collect();
    Ok(ParallelCorpus {
        pairs,
        src_lang: corpus.src_lang.clone(),
        tgt_lang: Some(code.to_owned()),
    })
}
