//! Writes the self-contained toy experiment: a copy task over sentences of a
//! small grammar, with POS-like tags and labeled arcs for probing.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use reprobe_core::corpus::Sentence;
use reprobe_core::synthetic::grammar_task;

pub struct ToySizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub probe_train: usize,
    pub probe_test: usize,
}

impl Default for ToySizes {
    fn default() -> Self {
        ToySizes {
            train: 800,
            valid: 80,
            test: 80,
            probe_train: 240,
            probe_test: 120,
        }
    }
}

const CONFIG: &str = "\
# Toy experiment: translate sentences into themselves, then probe the
# encoder for POS-like tags and labeled arcs.
output_dir = out
seed = 1

train_src = train.src
train_tgt = train.tgt
valid_src = valid.src
valid_tgt = valid.tgt
test_src = test.src
test_tgt = test.tgt
src_units = word
tgt_units = word

embedding_size = 64
hidden_size = 64
num_layers = 2
dropout = 0
epochs = 20
batch_size = 16
learning_rate = 0.5
decay_start_epoch = 14
init_range = 0.3
max_decode_len = 40

side = encoder
layers = emb,1,2,all
aggregation = last

probes = pos,rel
probe.pos.kind = word
probe.pos.train = pos.train
probe.pos.test = pos.test
probe.pos.coarse = pos.coarse
probe.rel.kind = relation
probe.rel.train = rel.train
probe.rel.test = rel.test
probe_epochs = 20
probe_batch_size = 32

shuffles = 1000
";

const COARSE: &str = "DT\tFUNC\nIN\tFUNC\nJJ\tCONTENT\nNN\tCONTENT\nVB\tCONTENT\n";

fn lines(sentences: impl Iterator<Item = Sentence>) -> String {
    sentences.map(|s| s.to_line() + "\n").collect()
}

/// Writes the toy files into `dir` and returns the config path.
pub fn make_toy(dir: &Path, sizes: &ToySizes, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let n = sizes.train + sizes.valid + sizes.test;
    let g = grammar_task(n, seed);
    let src: Vec<Sentence> = g.corpus.sources().cloned().collect();
    let (train, rest) = src.split_at(sizes.train);
    let (valid, test) = rest.split_at(sizes.valid);

    let mut files: Vec<(String, String)> = Vec::new();
    for (name, part) in [("train", train), ("valid", valid), ("test", test)] {
        let text = lines(part.iter().cloned());
        files.push((format!("{name}.src"), text.clone()));
        files.push((format!("{name}.tgt"), text));
    }

    // Probe training sentences come from the NMT training data; probe test
    // sentences from the held-out test split.
    let test_start = sizes.train + sizes.valid;
    let mut pos_train = g.pos.clone();
    pos_train
        .sentences
        .truncate(sizes.probe_train.min(sizes.train));
    let mut pos_test = g.pos.clone();
    pos_test.sentences = pos_test.sentences.split_off(test_start);
    pos_test.sentences.truncate(sizes.probe_test);
    let mut rel_train = g.relations.clone();
    rel_train
        .sentences
        .truncate(sizes.probe_train.min(sizes.train));
    let mut rel_test = g.relations.clone();
    rel_test.sentences = rel_test.sentences.split_off(test_start);
    rel_test.sentences.truncate(sizes.probe_test);

    files.push(("pos.train".into(), pos_train.to_text()));
    files.push(("pos.test".into(), pos_test.to_text()));
    files.push(("rel.train".into(), rel_train.to_text()?));
    files.push(("rel.test".into(), rel_test.to_text()?));
    files.push(("pos.coarse".into(), COARSE.into()));
    files.push(("toy.conf".into(), CONFIG.into()));
    for (name, text) in &files {
        let p = dir.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(dir.join("toy.conf"))
}
