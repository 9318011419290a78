use super::NmtConfig;
use crate::numerics::{seeded_rng, LstmParams, Parameter, Parameterized, Scalar};
use crate::Result;

/// One bidirectional encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm<T> {
    pub forward: LstmParams<T>,
    pub backward: LstmParams<T>,
}

/// Stacked bidirectional LSTM encoder, bilinear attention over the projected
/// top encoder layer, stacked LSTM decoder fed `[embedding; context]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NmtModel<T> {
    config: NmtConfig,
    pub src_embed: Parameter<T>,
    pub tgt_embed: Parameter<T>,
    pub encoder: Vec<BiLstm<T>>,
    /// `[2k × k]`: projects top encoder states to attention keys/values.
    pub attn_proj: Parameter<T>,
    /// `[k × k]`: bilinear score `d · W · key`.
    pub attn_score: Parameter<T>,
    pub decoder: Vec<LstmParams<T>>,
    pub out_w: Parameter<T>,
    pub out_b: Parameter<T>,
}

impl<T: Scalar> NmtModel<T> {
    /// Draws every parameter from the shared uniform initializer seeded with
    /// `config.seed`. An untouched instance is the random-weights control.
    pub fn new(config: &NmtConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed);
        let (e, k, r) = (config.embedding_size, config.hidden_size, config.init_range);
        let src_embed = Parameter::uniform("src_embed", &[config.src_vocab_size, e], r, &mut rng);
        let tgt_embed = Parameter::uniform("tgt_embed", &[config.tgt_vocab_size, e], r, &mut rng);
        let encoder = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { e } else { 2 * k };
                BiLstm {
                    forward: LstmParams::new(&format!("enc.{l}.fwd"), input, k, r, &mut rng),
                    backward: LstmParams::new(&format!("enc.{l}.bwd"), input, k, r, &mut rng),
                }
            })
            .collect();
        let attn_proj = Parameter::uniform("attn.proj", &[2 * k, k], r, &mut rng);
        let attn_score = Parameter::uniform("attn.score", &[k, k], r, &mut rng);
        let decoder = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { e + k } else { k };
                LstmParams::new(&format!("dec.{l}"), input, k, r, &mut rng)
            })
            .collect();
        let out_w = Parameter::uniform("out.w", &[k, config.tgt_vocab_size], r, &mut rng);
        let out_b = Parameter::uniform("out.b", &[config.tgt_vocab_size], r, &mut rng);
        Ok(NmtModel {
            config: config.clone(),
            src_embed,
            tgt_embed,
            encoder,
            attn_proj,
            attn_score,
            decoder,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &NmtConfig {
        &self.config
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    pub fn embedding_size(&self) -> usize {
        self.config.embedding_size
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn cast<U: Scalar>(&self) -> NmtModel<U> {
        let lstm = |p: &LstmParams<T>| LstmParams {
            w_x: p.w_x.cast(),
            w_h: p.w_h.cast(),
            bias: p.bias.cast(),
        };
        NmtModel {
            config: self.config.clone(),
            src_embed: self.src_embed.cast(),
            tgt_embed: self.tgt_embed.cast(),
            encoder: self
                .encoder
                .iter()
                .map(|b| BiLstm {
                    forward: lstm(&b.forward),
                    backward: lstm(&b.backward),
                })
                .collect(),
            attn_proj: self.attn_proj.cast(),
            attn_score: self.attn_score.cast(),
            decoder: self.decoder.iter().map(lstm).collect(),
            out_w: self.out_w.cast(),
            out_b: self.out_b.cast(),
        }
    }
}

/// Random-weights control: same initializer as training, never updated.
pub fn init_random<T: Scalar>(config: &NmtConfig, seed: u64) -> Result<NmtModel<T>> {
    let mut c = config.clone();
    c.seed = seed;
    NmtModel::new(&c)
}

impl<T: Scalar> Parameterized<T> for NmtModel<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut v = vec![&self.src_embed, &self.tgt_embed];
        for b in &self.encoder {
            v.extend(b.forward.parameters());
            v.extend(b.backward.parameters());
        }
        v.push(&self.attn_proj);
        v.push(&self.attn_score);
        for d in &self.decoder {
            v.extend(d.parameters());
        }
        v.push(&self.out_w);
        v.push(&self.out_b);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = vec![&mut self.src_embed, &mut self.tgt_embed];
        for b in &mut self.encoder {
            v.extend(b.forward.parameters_mut());
            v.extend(b.backward.parameters_mut());
        }
        v.push(&mut self.attn_proj);
        v.push(&mut self.attn_score);
        for d in &mut self.decoder {
            v.extend(d.parameters_mut());
        }
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }
}
