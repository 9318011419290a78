use std::fmt::Write as _;

use crate::numerics::{SgdSchedule, INIT_RANGE};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NmtConfig {
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub embedding_size: usize,
    /// LSTM state size `k`, per direction in the encoder.
    pub hidden_size: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: SgdSchedule,
    pub clip_norm: f64,
    /// Half-width of the uniform parameter initializer.
    pub init_range: f64,
    pub seed: u64,
    /// Unit scheme labels, recorded for provenance only.
    pub src_units: String,
    pub tgt_units: String,
}

impl NmtConfig {
    /// Defaults for everything but the vocabulary sizes: 500-dim embeddings
    /// and states, 4 layers, dropout 0.3, 20 epochs of SGD starting at 1.0
    /// and halving every epoch after the 9th.
    pub fn new(src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        NmtConfig {
            src_vocab_size,
            tgt_vocab_size,
            embedding_size: 500,
            hidden_size: 500,
            num_layers: 4,
            dropout: 0.3,
            epochs: 20,
            batch_size: 64,
            schedule: SgdSchedule::default(),
            clip_norm: 5.0,
            init_range: INIT_RANGE,
            seed: 1,
            src_units: "word".into(),
            tgt_units: "word".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.hidden_size == 0 || self.embedding_size == 0 {
            return bad("hidden and embedding sizes must be positive".into());
        }
        if self.num_layers == 0 {
            return bad("at least one layer is required".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive".into());
        }
        if self.src_vocab_size < 4 || self.tgt_vocab_size < 4 {
            return bad("vocabularies must include the 4 reserved ids".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.schedule.lr0 <= 0.0 || self.clip_norm <= 0.0 || self.init_range <= 0.0 {
            return bad("learning rate, clip norm and init range must be positive".into());
        }
        Ok(())
    }

    /// Width of an encoder layer's output (`[forward; backward]`).
    pub fn encoder_output_size(&self) -> usize {
        2 * self.hidden_size
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("src_vocab_size", self.src_vocab_size.to_string());
        kv("tgt_vocab_size", self.tgt_vocab_size.to_string());
        kv("embedding_size", self.embedding_size.to_string());
        kv("hidden_size", self.hidden_size.to_string());
        kv("num_layers", self.num_layers.to_string());
        kv("dropout", self.dropout.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr", self.schedule.lr0.to_string());
        kv("decay", self.schedule.decay.to_string());
        kv(
            "decay_start_epoch",
            self.schedule.decay_start_epoch.to_string(),
        );
        kv("clip_norm", self.clip_norm.to_string());
        kv("init_range", self.init_range.to_string());
        kv("seed", self.seed.to_string());
        kv("src_units", self.src_units.clone());
        kv("tgt_units", self.tgt_units.clone());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = NmtConfig::new(4, 4);
        for (n, line) in text.lines().enumerate() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("nmt config", n + 1, "expected key=value"))?;
            let num = |v: &str| -> Result<f64> {
                v.parse()
                    .map_err(|_| Error::parse("nmt config", n + 1, format!("bad number {v:?}")))
            };
            let int = |v: &str| -> Result<u64> {
                v.parse()
                    .map_err(|_| Error::parse("nmt config", n + 1, format!("bad integer {v:?}")))
            };
            match k {
                "src_vocab_size" => c.src_vocab_size = int(v)? as usize,
                "tgt_vocab_size" => c.tgt_vocab_size = int(v)? as usize,
                "embedding_size" => c.embedding_size = int(v)? as usize,
                "hidden_size" => c.hidden_size = int(v)? as usize,
                "num_layers" => c.num_layers = int(v)? as usize,
                "dropout" => c.dropout = num(v)?,
                "epochs" => c.epochs = int(v)? as usize,
                "batch_size" => c.batch_size = int(v)? as usize,
                "lr" => c.schedule.lr0 = num(v)?,
                "decay" => c.schedule.decay = num(v)?,
                "decay_start_epoch" => c.schedule.decay_start_epoch = int(v)? as usize,
                "clip_norm" => c.clip_norm = num(v)?,
                "init_range" => c.init_range = num(v)?,
                "seed" => c.seed = int(v)?,
                "src_units" => c.src_units = v.to_owned(),
                "tgt_units" => c.tgt_units = v.to_owned(),
                other => {
                    return Err(Error::parse(
                        "nmt config",
                        n + 1,
                        format!("unknown key {other:?}"),
                    ))
                }
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = NmtConfig::new(120, 80);
        c.hidden_size = 64;
        c.dropout = 0.25;
        c.src_units = "bpe:500".into();
        assert_eq!(NmtConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_degenerate() {
        let mut c = NmtConfig::new(10, 10);
        c.num_layers = 0;
        assert!(c.validate().is_err());
        let mut c = NmtConfig::new(10, 10);
        c.hidden_size = 0;
        assert!(c.validate().is_err());
        let mut c = NmtConfig::new(10, 10);
        c.epochs = 0;
        assert!(c.validate().is_err());
    }
}
