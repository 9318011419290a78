//! Flat `key = value` experiment configuration.
//!
//! `#` starts a comment, blank lines are ignored and every key may appear at
//! most once. Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use reprobe_core::analysis::BinSpec;
use reprobe_core::corpus::Scheme;
use reprobe_core::extraction::{Aggregation, DecoderStep, LayerSelector, Side};
use reprobe_core::nmt::NmtConfig;
use reprobe_core::probe::ProbeConfig;
use sha2::{Digest, Sha256};

/// Unit scheme plus merge count for BPE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Units {
    pub scheme: Scheme,
    pub bpe_ops: usize,
}

impl std::str::FromStr for Units {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(n) = s.strip_prefix("bpe:") {
            let bpe_ops = n
                .parse()
                .with_context(|| format!("bad BPE merge count in {s:?}"))?;
            return Ok(Units {
                scheme: Scheme::Bpe,
                bpe_ops,
            });
        }
        let scheme: Scheme = s.parse()?;
        if scheme == Scheme::Bpe {
            bail!("bpe units need a merge count, e.g. bpe:32000");
        }
        Ok(Units { scheme, bpe_ops: 0 })
    }
}

impl std::fmt::Display for Units {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.scheme {
            Scheme::Bpe => write!(f, "bpe:{}", self.bpe_ops),
            s => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// One label per token.
    Word,
    /// One label per head/modifier arc.
    Relation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTask {
    pub name: String,
    pub kind: ProbeKind,
    pub train: PathBuf,
    pub test: PathBuf,
    /// Source sentences aligned with the annotated target sentences; needed
    /// for decoder-side extraction.
    pub train_source: Option<PathBuf>,
    pub test_source: Option<PathBuf>,
    /// `fine<TAB>coarse` tag grouping for coarse F1.
    pub coarse: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub train_src: PathBuf,
    pub train_tgt: PathBuf,
    pub valid: Option<(PathBuf, PathBuf)>,
    pub test: Option<(PathBuf, PathBuf)>,
    pub src_units: Units,
    pub tgt_units: Units,
    /// Word-level cap applied when loading parallel text.
    pub max_len: usize,
    /// Unit-level cap applied after segmentation.
    pub max_units: usize,
    pub vocab_size: usize,
    pub nmt: NmtConfig,
    pub max_decode_len: usize,
    pub side: Side,
    pub layers: Vec<LayerSelector>,
    pub aggregation: Aggregation,
    pub decoder_step: DecoderStep,
    pub probe: ProbeConfig,
    pub tasks: Vec<ProbeTask>,
    pub freq_bins: BinSpec,
    pub distance_bins: BinSpec,
    pub significance: bool,
    pub shuffles: usize,
    /// Canonical `key = value` lines after overrides, used for the hash.
    canonical: String,
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut kv = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        if kv.insert(k.to_owned(), v.to_owned()).is_some() {
            bail!("line {}: duplicate key {k:?}", n + 1);
        }
    }
    Ok(kv)
}

/// Consumes keys from the parsed map so leftovers can be reported.
struct Keys {
    kv: BTreeMap<String, String>,
    base: PathBuf,
}

impl Keys {
    fn take(&mut self, k: &str) -> Option<String> {
        self.kv.remove(k)
    }

    fn require(&mut self, k: &str) -> Result<String> {
        self.take(k)
            .ok_or_else(|| anyhow!("missing required key {k:?}"))
    }

    fn parse<T: std::str::FromStr>(&mut self, k: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(k) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| anyhow!("key {k:?}: cannot parse {v:?}: {e}")),
        }
    }

    fn path(&self, v: &str) -> PathBuf {
        let p = Path::new(v);
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base.join(p)
        }
    }

    fn opt_path(&mut self, k: &str) -> Option<PathBuf> {
        self.take(k).map(|v| self.path(&v))
    }

    fn req_path(&mut self, k: &str) -> Result<PathBuf> {
        let v = self.require(k)?;
        Ok(self.path(&v))
    }

    fn list<T: std::str::FromStr>(&mut self, k: &str, default: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.take(k).unwrap_or_else(|| default.to_owned());
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| anyhow!("key {k:?}: cannot parse {s:?}: {e}"))
            })
            .collect()
    }

    fn pair(&mut self, a: &str, b: &str) -> Result<Option<(PathBuf, PathBuf)>> {
        match (self.opt_path(a), self.opt_path(b)) {
            (Some(x), Some(y)) => Ok(Some((x, y))),
            (None, None) => Ok(None),
            _ => bail!("{a} and {b} must be given together"),
        }
    }
}

impl ExperimentConfig {
    /// Reads `path`, applies `key=value` overrides and the `REPROBE_SEED`
    /// environment variable, then validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut kv = parse_pairs(&text).with_context(|| format!("config {}", path.display()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("override {o:?} is not key=value"))?;
            kv.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        if let Ok(seed) = std::env::var("REPROBE_SEED") {
            kv.insert("seed".into(), seed);
        }
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::from_pairs(kv, base)
    }

    fn from_pairs(kv: BTreeMap<String, String>, base: PathBuf) -> Result<Self> {
        let canonical: String = kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let mut k = Keys { kv, base };

        let seed: u64 = k.parse("seed", 1)?;
        let output_dir = k.req_path("output_dir")?;
        let train_src = k.req_path("train_src")?;
        let train_tgt = k.req_path("train_tgt")?;
        let valid = k.pair("valid_src", "valid_tgt")?;
        let test = k.pair("test_src", "test_tgt")?;
        let src_units: Units = k.parse(
            "src_units",
            Units {
                scheme: Scheme::Word,
                bpe_ops: 0,
            },
        )?;
        let tgt_units: Units = k.parse(
            "tgt_units",
            Units {
                scheme: Scheme::Word,
                bpe_ops: 0,
            },
        )?;

        // vocabulary sizes are filled in once the vocabularies exist
        let mut nmt = NmtConfig::new(4, 4);
        nmt.embedding_size = k.parse("embedding_size", nmt.embedding_size)?;
        nmt.hidden_size = k.parse("hidden_size", nmt.hidden_size)?;
        nmt.num_layers = k.parse("num_layers", nmt.num_layers)?;
        nmt.dropout = k.parse("dropout", nmt.dropout)?;
        nmt.epochs = k.parse("epochs", nmt.epochs)?;
        nmt.batch_size = k.parse("batch_size", nmt.batch_size)?;
        nmt.schedule.lr0 = k.parse("learning_rate", nmt.schedule.lr0)?;
        nmt.schedule.decay = k.parse("lr_decay", nmt.schedule.decay)?;
        nmt.schedule.decay_start_epoch =
            k.parse("decay_start_epoch", nmt.schedule.decay_start_epoch)?;
        nmt.clip_norm = k.parse("clip_norm", nmt.clip_norm)?;
        nmt.init_range = k.parse("init_range", nmt.init_range)?;
        nmt.seed = seed;
        nmt.src_units = src_units.to_string();
        nmt.tgt_units = tgt_units.to_string();
        nmt.validate()?;

        let probe = ProbeConfig {
            batch_size: k.parse("probe_batch_size", 512)?,
            epochs: k.parse("probe_epochs", 20)?,
            learning_rate: k.parse("probe_learning_rate", 1e-3)?,
            seed,
        };
        if probe.batch_size == 0 || probe.epochs == 0 || probe.learning_rate <= 0.0 {
            bail!("probe batch size, epochs and learning rate must be positive");
        }

        let mut tasks = Vec::new();
        for name in k.list::<String>("probes", "")? {
            let key = |f: &str| format!("probe.{name}.{f}");
            let kind = match k.require(&key("kind"))?.as_str() {
                "word" => ProbeKind::Word,
                "relation" => ProbeKind::Relation,
                other => bail!(
                    "{}: unknown probe kind {other:?} (word or relation)",
                    key("kind")
                ),
            };
            tasks.push(ProbeTask {
                kind,
                train: k.req_path(&key("train"))?,
                test: k.req_path(&key("test"))?,
                train_source: k.opt_path(&key("train_source")),
                test_source: k.opt_path(&key("test_source")),
                coarse: k.opt_path(&key("coarse")),
                name,
            });
        }

        let side: Side = k.parse("side", Side::Encoder)?;
        let layers: Vec<LayerSelector> = k.list("layers", "all")?;
        if layers.is_empty() {
            bail!("layers must name at least one selector");
        }
        for l in &layers {
            l.layers(nmt.num_layers)?;
        }
        let decoder_step = match k.take("decoder_step").as_deref() {
            None | Some("consuming") => DecoderStep::Consuming,
            Some("predicting") => DecoderStep::Predicting,
            Some(other) => bail!("decoder_step: {other:?} is not consuming or predicting"),
        };

        let config = ExperimentConfig {
            output_dir,
            seed,
            train_src,
            train_tgt,
            valid,
            test,
            src_units,
            tgt_units,
            max_len: k.parse("max_len", 80)?,
            max_units: k.parse("max_units", 500)?,
            vocab_size: k.parse("vocab_size", 50_000)?,
            max_decode_len: k.parse("max_decode_len", 100)?,
            nmt,
            side,
            layers,
            aggregation: k.parse("aggregation", Aggregation::Last)?,
            decoder_step,
            probe,
            tasks,
            freq_bins: BinSpec::new(k.list("freq_bins", "0,1,6,11,21,51,101")?)?,
            distance_bins: BinSpec::new(k.list("distance_bins", "1,2,3,6,11")?)?,
            significance: k.parse("significance", true)?,
            shuffles: k.parse("shuffles", 10_000)?,
            canonical,
        };
        if let Some(extra) = k.kv.keys().next() {
            bail!("unknown config key {extra:?}");
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.max_len == 0
            || self.max_units == 0
            || self.max_decode_len == 0
            || self.shuffles == 0
        {
            bail!("max_len, max_units, max_decode_len and shuffles must be positive");
        }
        let mut inputs = vec![&self.train_src, &self.train_tgt];
        for (a, b) in self.valid.iter().chain(&self.test) {
            inputs.extend([a, b]);
        }
        for t in &self.tasks {
            inputs.extend([&t.train, &t.test]);
            inputs.extend(t.coarse.iter());
            if self.side == Side::Decoder {
                match (&t.train_source, &t.test_source) {
                    (Some(a), Some(b)) => inputs.extend([a, b]),
                    _ => bail!(
                        "probe {}: decoder-side extraction needs probe.{0}.train_source and probe.{0}.test_source",
                        t.name
                    ),
                }
            }
        }
        for p in inputs {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        let mut names: Vec<&str> = self.tasks.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            bail!("probe task names must be unique");
        }
        if let Some(bad) = names
            .iter()
            .find(|n| n.is_empty() || n.contains(['/', '.', ' ']))
        {
            bail!("probe task name {bad:?} must be non-empty without '/', '.' or spaces");
        }
        Ok(())
    }

    /// SHA-256 over the canonical configuration after overrides.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical.as_bytes()))
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.output_dir.join(rel)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_strip_comments_and_reject_duplicates() {
        let kv = parse_pairs("# head\na = 1 # trailing\n\n b=two words \n").unwrap();
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "two words");
        assert!(parse_pairs("a = 1\na = 2\n").is_err());
        assert!(parse_pairs("just text\n").is_err());
    }

    #[test]
    fn unit_specs() {
        assert_eq!("bpe:300".parse::<Units>().unwrap().bpe_ops, 300);
        assert_eq!("char".parse::<Units>().unwrap().scheme, Scheme::Char);
        assert!("bpe".parse::<Units>().is_err());
        assert!("bytes".parse::<Units>().is_err());
    }
}
