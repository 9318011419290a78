//! Seeded generators for the small tasks used by tests, demos and the
//! shipped toy pipeline.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{
    ParallelCorpus, Relation, RelationCorpus, RelationSentence, Sentence, TaggedCorpus,
    TaggedSentence,
};
use crate::numerics::{seeded_rng, SeededRng};

fn sentence(tokens: Vec<String>) -> Sentence {
    Sentence::new(tokens)
}

fn corpus(pairs: Vec<(Sentence, Sentence)>, src: &str, tgt: &str) -> ParallelCorpus {
    ParallelCorpus {
        pairs,
        src_lang: Some(src.into()),
        tgt_lang: Some(tgt.into()),
    }
}

/// Identity translation over `vocab_size` word types `w0, w1, ...`.
pub fn copy_task(
    n: usize,
    vocab_size: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> ParallelCorpus {
    let mut rng = seeded_rng(seed);
    let pairs = (0..n)
        .map(|_| {
            let len = rng.gen_range(min_len.max(1)..=max_len.max(min_len.max(1)));
            let s = sentence(
                (0..len)
                    .map(|_| format!("w{}", rng.gen_range(0..vocab_size)))
                    .collect(),
            );
            (s.clone(), s)
        })
        .collect();
    corpus(pairs, "xx", "xx")
}

/// Parallel data from a small SVO grammar translated into a verb-final
/// language with case particles, plus gold POS tags and labeled head/modifier
/// arcs for the source side.
///
/// Subject and object are both plain nouns attached to the verb, so their
/// labels are recoverable only from sentence context, not from the word pair.
#[derive(Debug, Clone)]
pub struct GrammarTask {
    pub corpus: ParallelCorpus,
    pub pos: TaggedCorpus,
    pub relations: RelationCorpus,
}

const DETS: [&str; 3] = ["the", "a", "this"];
const ADJS: [&str; 12] = [
    "big", "small", "red", "old", "new", "green", "tall", "quiet", "bright", "cold", "young",
    "brave",
];
const NOUNS: [&str; 30] = [
    "dog", "cat", "man", "woman", "child", "bird", "horse", "king", "queen", "farmer", "teacher",
    "doctor", "boy", "girl", "fox", "wolf", "sailor", "baker", "poet", "judge", "monk", "thief",
    "guard", "singer", "tiger", "mouse", "goat", "lion", "clerk", "nurse",
];
const TRANSITIVE: [&str; 15] = [
    "sees", "likes", "finds", "helps", "chases", "calls", "meets", "feeds", "follows", "greets",
    "hears", "watches", "pushes", "visits", "thanks",
];
const INTRANSITIVE: [&str; 8] = [
    "sleeps", "runs", "sings", "waits", "laughs", "falls", "swims", "smiles",
];
const PREPS: [&str; 6] = ["near", "behind", "with", "under", "beside", "after"];

fn tgt(word: &str) -> String {
    format!("{word}_x")
}

struct Np {
    words: Vec<(String, &'static str)>,
    /// Index of the noun within `words`.
    noun: usize,
}

fn noun_phrase(rng: &mut SeededRng) -> Np {
    let mut words = vec![(DETS.choose(rng).unwrap().to_string(), "DT")];
    if rng.gen_bool(0.5) {
        words.push((ADJS.choose(rng).unwrap().to_string(), "JJ"));
    }
    words.push((NOUNS.choose(rng).unwrap().to_string(), "NN"));
    let noun = words.len() - 1;
    Np { words, noun }
}

/// Target order inside a noun phrase is noun, adjective, determiner.
fn np_target(np: &Np) -> Vec<String> {
    np.words.iter().rev().map(|(w, _)| tgt(w)).collect()
}

pub fn grammar_task(n: usize, seed: u64) -> GrammarTask {
    let mut rng = seeded_rng(seed);
    let mut pairs = Vec::with_capacity(n);
    let mut pos = TaggedCorpus::default();
    let mut rels = RelationCorpus::default();
    for _ in 0..n {
        let mut words: Vec<(String, &'static str)> = Vec::new();
        let mut arcs: Vec<Relation> = Vec::new();
        let push_np =
            |words: &mut Vec<(String, &'static str)>, arcs: &mut Vec<Relation>, np: &Np| {
                let base = words.len();
                let noun = base + np.noun;
                for (i, (_, tag)) in np.words.iter().enumerate() {
                    let label = match *tag {
                        "DT" => "det",
                        "JJ" => "amod",
                        _ => continue,
                    };
                    arcs.push(Relation {
                        head: noun,
                        modifier: base + i,
                        label: label.into(),
                    });
                }
                words.extend(np.words.iter().cloned());
                noun
            };

        let subj = noun_phrase(&mut rng);
        let subj_noun = push_np(&mut words, &mut arcs, &subj);
        let transitive = rng.gen_bool(0.65);
        let verb_word = if transitive {
            TRANSITIVE.choose(&mut rng).unwrap()
        } else {
            INTRANSITIVE.choose(&mut rng).unwrap()
        };
        let verb = words.len();
        words.push((verb_word.to_string(), "VB"));
        arcs.push(Relation {
            head: verb,
            modifier: subj_noun,
            label: "nsubj".into(),
        });
        let obj = transitive.then(|| noun_phrase(&mut rng));
        if let Some(obj) = &obj {
            let noun = push_np(&mut words, &mut arcs, obj);
            arcs.push(Relation {
                head: verb,
                modifier: noun,
                label: "dobj".into(),
            });
        }
        let pp = rng
            .gen_bool(0.4)
            .then(|| (*PREPS.choose(&mut rng).unwrap(), noun_phrase(&mut rng)));
        if let Some((prep, np)) = &pp {
            let p = words.len();
            words.push((prep.to_string(), "IN"));
            arcs.push(Relation {
                head: verb,
                modifier: p,
                label: "prep".into(),
            });
            let noun = push_np(&mut words, &mut arcs, np);
            arcs.push(Relation {
                head: p,
                modifier: noun,
                label: "pobj".into(),
            });
        }

        let mut target = np_target(&subj);
        target.push("ga".into());
        if let Some(obj) = &obj {
            target.extend(np_target(obj));
            target.push("o".into());
        }
        if let Some((prep, np)) = &pp {
            target.extend(np_target(np));
            target.push(tgt(prep));
        }
        target.push(tgt(verb_word));

        arcs.sort_by_key(|r| (r.modifier, r.head));
        let src = sentence(words.iter().map(|(w, _)| w.clone()).collect());
        let tags: Vec<String> = words.iter().map(|(_, t)| t.to_string()).collect();
        pos.tag_set.extend(tags.iter().cloned());
        rels.label_set.extend(arcs.iter().map(|r| r.label.clone()));
        pos.sentences.push(TaggedSentence {
            sentence: src.clone(),
            tags,
        });
        rels.sentences.push(RelationSentence {
            sentence: src.clone(),
            relations: arcs,
        });
        pairs.push((src, sentence(target)));
    }
    GrammarTask {
        corpus: corpus(pairs, "en", "xx"),
        pos,
        relations: rels,
    }
}

/// Agglutinative source words `stem + suffix`, translated into the stem
/// followed by a function word for the suffix. Tags name the suffix.
#[derive(Debug, Clone)]
pub struct MorphologyTask {
    pub train: ParallelCorpus,
    pub train_tags: TaggedCorpus,
    /// Sentences in which about half of the words use stems absent from
    /// `train`.
    pub test: ParallelCorpus,
    pub test_tags: TaggedCorpus,
}

const SUFFIXES: [(&str, &str, Option<&str>); 5] = [
    ("", "SG", None),
    ("lar", "PL", Some("many")),
    ("im", "POSS", Some("my")),
    ("da", "LOC", Some("in")),
    ("dan", "ABL", Some("from")),
];

/// Stems end in a consonant that no suffix starts with, so every word splits
/// into stem and suffix unambiguously.
fn stem(rng: &mut SeededRng) -> String {
    const ONSET: [char; 8] = ['b', 'k', 'm', 'n', 'p', 's', 't', 'z'];
    const VOWEL: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
    const CODA: [char; 6] = ['b', 'k', 'p', 's', 't', 'z'];
    let syllables = rng.gen_range(1..=2);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(*ONSET.choose(rng).unwrap());
        s.push(*VOWEL.choose(rng).unwrap());
    }
    s.push(*CODA.choose(rng).unwrap());
    s
}

fn distinct_stems(n: usize, rng: &mut SeededRng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = stem(rng);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

fn morph_sentence(stems: &[&String], rng: &mut SeededRng) -> (Sentence, Sentence, Vec<String>) {
    let mut src = Vec::new();
    let mut tgt = Vec::new();
    let mut tags = Vec::new();
    for st in stems {
        let (suffix, tag, function) = SUFFIXES.choose(rng).unwrap();
        src.push(format!("{st}{suffix}"));
        tgt.push(st.to_uppercase());
        if let Some(f) = function {
            tgt.push(f.to_string());
        }
        tags.push(tag.to_string());
    }
    (sentence(src), sentence(tgt), tags)
}

fn tagged(rows: &[(Sentence, Vec<String>)]) -> TaggedCorpus {
    let mut c = TaggedCorpus::default();
    for (s, tags) in rows {
        c.tag_set.extend(tags.iter().cloned());
        c.sentences.push(TaggedSentence {
            sentence: s.clone(),
            tags: tags.clone(),
        });
    }
    c
}

pub fn morphology_task(
    n_train: usize,
    n_test: usize,
    known_stems: usize,
    unseen_stems: usize,
    seed: u64,
) -> MorphologyTask {
    let mut rng = seeded_rng(seed);
    let stems = distinct_stems(known_stems + unseen_stems, &mut rng);
    let (known, unseen) = stems.split_at(known_stems);
    let build = |n: usize, unseen_share: f64, rng: &mut SeededRng| {
        let mut pairs = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let len = rng.gen_range(3..=6);
            let picks: Vec<&String> = (0..len)
                .map(|_| {
                    if !unseen.is_empty() && rng.gen_bool(unseen_share) {
                        unseen.choose(rng).unwrap()
                    } else {
                        known.choose(rng).unwrap()
                    }
                })
                .collect();
            let (s, t, tags) = morph_sentence(&picks, rng);
            rows.push((s.clone(), tags));
            pairs.push((s, t));
        }
        (corpus(pairs, "ag", "xx"), tagged(&rows))
    };
    let (train, train_tags) = build(n_train, 0.0, &mut rng);
    let (test, test_tags) = build(n_test, 0.5, &mut rng);
    MorphologyTask {
        train,
        train_tags,
        test,
        test_tags,
    }
}
