//! Word-level tag files and head/modifier relation files.
//!
//! Tagged format: `token<TAB>tag` per line, sentences separated by blank
//! lines. Relation format: `index<TAB>form<TAB>head<TAB>label` with 1-based
//! indices; head `0` attaches to the root and yields no relation.

use std::collections::BTreeSet;
use std::path::Path;

use super::Sentence;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub sentence: Sentence,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaggedCorpus {
    pub sentences: Vec<TaggedSentence>,
    pub tag_set: BTreeSet<String>,
}

/// A labeled arc between two words of the same sentence (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub head: usize,
    pub modifier: usize,
    pub label: String,
}

impl Relation {
    pub fn distance(&self) -> usize {
        self.head.abs_diff(self.modifier)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSentence {
    pub sentence: Sentence,
    pub relations: Vec<Relation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RelationCorpus {
    pub sentences: Vec<RelationSentence>,
    pub label_set: BTreeSet<String>,
}

impl TaggedCorpus {
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.tags.len()).sum()
    }

    pub fn plain_sentences(&self) -> Vec<Sentence> {
        self.sentences.iter().map(|s| s.sentence.clone()).collect()
    }

    /// Inverse of [`parse_tagged_corpus`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            for (w, t) in s.sentence.tokens.iter().zip(&s.tags) {
                out.push_str(&format!("{w}\t{t}\n"));
            }
            out.push('\n');
        }
        out
    }
}

impl RelationCorpus {
    pub fn num_relations(&self) -> usize {
        self.sentences.iter().map(|s| s.relations.len()).sum()
    }

    /// Inverse of [`parse_relation_corpus`]; tokens that modify nothing are
    /// attached to the root with label `root`. Fails when a token has more
    /// than one head, which the format cannot express.
    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        for (si, s) in self.sentences.iter().enumerate() {
            let mut head: Vec<Option<&Relation>> = vec![None; s.sentence.len()];
            for r in &s.relations {
                if head[r.modifier].replace(r).is_some() {
                    return Err(Error::InvalidArgument(format!(
                        "sentence {si}: token {} has more than one head",
                        r.modifier
                    )));
                }
            }
            for (i, (w, h)) in s.sentence.tokens.iter().zip(head).enumerate() {
                match h {
                    Some(r) => {
                        out.push_str(&format!("{}\t{w}\t{}\t{}\n", i + 1, r.head + 1, r.label))
                    }
                    None => out.push_str(&format!("{}\t{w}\t0\troot\n", i + 1)),
                }
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn plain_sentences(&self) -> Vec<Sentence> {
        self.sentences.iter().map(|s| s.sentence.clone()).collect()
    }
}

/// Groups non-blank lines into blocks, keeping 1-based line numbers.
fn blocks(text: &str) -> Vec<Vec<(usize, &str)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push((n + 1, line));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn parse_tagged_corpus(text: &str, context: &str) -> Result<TaggedCorpus> {
    let mut corpus = TaggedCorpus::default();
    for block in blocks(text) {
        let mut tokens = Vec::with_capacity(block.len());
        let mut tags = Vec::with_capacity(block.len());
        for (n, line) in block {
            let fields: Vec<&str> = line.split('\t').collect();
            let [token, tag] = fields[..] else {
                return Err(Error::parse(context, n, "expected token<TAB>tag"));
            };
            if token.is_empty() || tag.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::parse(
                    context,
                    n,
                    "empty or whitespace-bearing field",
                ));
            }
            tokens.push(token.to_owned());
            tags.push(tag.to_owned());
            corpus.tag_set.insert(tag.to_owned());
        }
        corpus.sentences.push(TaggedSentence {
            sentence: Sentence::new(tokens),
            tags,
        });
    }
    Ok(corpus)
}

pub fn parse_relation_corpus(text: &str, context: &str) -> Result<RelationCorpus> {
    let mut corpus = RelationCorpus::default();
    for block in blocks(text) {
        let mut tokens = Vec::with_capacity(block.len());
        let mut arcs = Vec::new();
        for (pos, &(n, line)) in block.iter().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let [index, form, head, label] = fields[..] else {
                return Err(Error::parse(
                    context,
                    n,
                    "expected index<TAB>form<TAB>head<TAB>label",
                ));
            };
            let index: usize = index
                .parse()
                .map_err(|_| Error::parse(context, n, format!("bad index {index:?}")))?;
            if index != pos + 1 {
                return Err(Error::parse(
                    context,
                    n,
                    format!("index {index} out of sequence, expected {}", pos + 1),
                ));
            }
            let head: usize = head
                .parse()
                .map_err(|_| Error::parse(context, n, format!("bad head {head:?}")))?;
            if form.is_empty() || label.is_empty() || form.chars().any(char::is_whitespace) {
                return Err(Error::parse(
                    context,
                    n,
                    "empty or whitespace-bearing field",
                ));
            }
            if head == index {
                return Err(Error::parse(context, n, "token is its own head"));
            }
            tokens.push(form.to_owned());
            if head != 0 {
                arcs.push((n, head, pos, label.to_owned()));
            }
        }
        let len = tokens.len();
        let mut relations = Vec::with_capacity(arcs.len());
        for (n, head, modifier, label) in arcs {
            if head > len {
                return Err(Error::parse(
                    context,
                    n,
                    format!("head {head} out of range for sentence of {len} tokens"),
                ));
            }
            corpus.label_set.insert(label.clone());
            relations.push(Relation {
                head: head - 1,
                modifier,
                label,
            });
        }
        corpus.sentences.push(RelationSentence {
            sentence: Sentence::new(tokens),
            relations,
        });
    }
    Ok(corpus)
}

pub fn load_tagged_corpus(path: impl AsRef<Path>) -> Result<TaggedCorpus> {
    let path = path.as_ref();
    parse_tagged_corpus(&super::read_to_string(path)?, &path.display().to_string())
}

pub fn load_relation_corpus(path: impl AsRef<Path>) -> Result<RelationCorpus> {
    let path = path.as_ref();
    parse_relation_corpus(&super::read_to_string(path)?, &path.display().to_string())
}
