use std::collections::HashMap;

use super::segment::SegmentationModel;
use super::Sentence;
use crate::{Error, Result};

/// Appended to the final symbol of every word before merges are counted.
pub const END_OF_WORD: &str = "</w>";

/// Interned symbol table so pair counting works on integer keys.
#[derive(Default)]
struct Symbols {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Symbols {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.to_owned());
        self.ids.insert(s.to_owned(), id);
        id
    }
}

/// Splits a word into characters with the end-of-word marker glued to the
/// final character.
pub(crate) fn initial_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    chars
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == n {
                format!("{c}{END_OF_WORD}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

/// Learns up to `num_ops` merges by repeatedly joining the most frequent
/// adjacent symbol pair, counted inside words and weighted by word frequency.
///
/// Equal counts go to the pair that occurs first in corpus reading order.
/// Learning stops early once every word is a single symbol.
pub fn learn_bpe(corpus: &[Sentence], num_ops: usize) -> Result<SegmentationModel> {
    let mut symbols = Symbols::default();
    let mut type_index: HashMap<&str, usize> = HashMap::new();
    let mut words: Vec<Vec<u32>> = Vec::new();
    let mut freqs: Vec<u64> = Vec::new();
    for token in corpus.iter().flat_map(|s| s.tokens.iter()) {
        match type_index.get(token.as_str()) {
            Some(&i) => freqs[i] += 1,
            None => {
                type_index.insert(token, words.len());
                words.push(
                    initial_symbols(token)
                        .iter()
                        .map(|s| symbols.intern(s))
                        .collect(),
                );
                freqs.push(1);
            }
        }
    }
    if words.is_empty() {
        return Err(Error::Empty("corpus"));
    }

    let mut merges = Vec::with_capacity(num_ops);
    while merges.len() < num_ops {
        // (count, first occurrence as (word type, position))
        let mut stats: HashMap<(u32, u32), (u64, (usize, usize))> = HashMap::new();
        for (w, (word, &f)) in words.iter().zip(&freqs).enumerate() {
            for (p, pair) in word.windows(2).enumerate() {
                let e = stats.entry((pair[0], pair[1])).or_insert((0, (w, p)));
                e.0 += f;
            }
        }
        let Some((&best, _)) = stats
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then_with(|| b.1 .1.cmp(&a.1 .1)))
        else {
            break;
        };
        let merged = format!(
            "{}{}",
            symbols.names[best.0 as usize], symbols.names[best.1 as usize]
        );
        let merged = symbols.intern(&merged);
        for word in &mut words {
            merge_pair(word, best, merged);
        }
        merges.push((
            symbols.names[best.0 as usize].clone(),
            symbols.names[best.1 as usize].clone(),
        ));
    }
    Ok(SegmentationModel::bpe(merges))
}

fn merge_pair(word: &mut Vec<u32>, pair: (u32, u32), merged: u32) {
    if word.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == pair.0 && word[i + 1] == pair.1 {
            out.push(merged);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    *word = out;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(words: &[(&str, usize)]) -> Vec<Sentence> {
        let tokens: Vec<String> = words
            .iter()
            .flat_map(|&(w, n)| std::iter::repeat_n(w.to_owned(), n))
            .collect();
        vec![Sentence::new(tokens)]
    }

    #[test]
    fn zero_ops_is_empty() {
        let m = learn_bpe(&corpus(&[("abc", 2)]), 0).unwrap();
        assert!(m.merges().is_empty());
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(learn_bpe(&[], 3).is_err());
        assert!(learn_bpe(&[Sentence::default()], 3).is_err());
    }

    #[test]
    fn stops_when_exhausted() {
        let m = learn_bpe(&corpus(&[("ab", 1)]), 10).unwrap();
        assert_eq!(m.merges(), vec![("a".to_owned(), "b</w>".to_owned())]);
    }

    #[test]
    fn first_merge_two_word_corpus() {
        // "ab" x3: (a, b</w>) = 3 ; "ba" x2: (b, a</w>) = 2
        let m = learn_bpe(&corpus(&[("ab", 3), ("ba", 2)]), 1).unwrap();
        assert_eq!(m.merges()[0], ("a".to_owned(), "b</w>".to_owned()));
    }

    #[test]
    fn classic_corpus() {
        let m = learn_bpe(
            &corpus(&[("low", 5), ("lower", 2), ("newest", 6), ("widest", 3)]),
            4,
        )
        .unwrap();
        let got: Vec<(&str, &str)> = m
            .merges()
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        // (e,s) and (s,t</w>) tie at 9, (e,s) occurs first in "newest";
        // after (l,o)=7 the three 6-count pairs tie and (n,e) comes first.
        assert_eq!(
            got,
            vec![("e", "s"), ("es", "t</w>"), ("l", "o"), ("n", "e")]
        );
    }
}
