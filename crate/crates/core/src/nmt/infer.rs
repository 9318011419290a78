//! Single-sentence inference: encoder states for extraction, teacher-forced
//! decoder traces and greedy translation.

use super::graph::{attend_row, decoder_step, encoder_forward, DecoderState};
use super::model::NmtModel;
use crate::corpus::{BOS, EOS, PAD};
use crate::numerics::{cross_entropy, Scalar, Tensor};
use crate::{Error, Result};

/// Forward and backward states of one encoder layer, `[N × k]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates<T> {
    pub forward: Tensor<T>,
    pub backward: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates<T> {
    /// Layer-0 source embeddings, `[N × e]`.
    pub embeddings: Tensor<T>,
    /// Layers 1..=L.
    pub layers: Vec<LayerStates<T>>,
    /// Projected top-layer states used as attention keys, `[N × k]`.
    pub keys: Tensor<T>,
}

impl<T: Scalar> EncoderStates<T> {
    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn stack<T: Scalar>(rows: &[Tensor<T>]) -> Tensor<T> {
    let cols = rows.first().map_or(0, |r| r.cols());
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        data.extend_from_slice(r.row(0));
    }
    Tensor::from_vec(&[rows.len(), cols], data).expect("consistent row widths")
}

/// Runs the encoder over one source unit sequence with dropout off.
pub fn encode<T: Scalar>(model: &NmtModel<T>, src: &[usize]) -> Result<EncoderStates<T>> {
    let pass = encoder_forward(model, &[src], None)?;
    let e = model.embedding_size();
    let mut embeddings = Tensor::zeros(&[src.len(), e]);
    for (t, &id) in src.iter().enumerate() {
        embeddings
            .row_mut(t)
            .copy_from_slice(model.src_embed.value.row(id));
    }
    let layers = pass
        .layers
        .iter()
        .map(|l| LayerStates {
            forward: stack(&l.fwd_out),
            backward: stack(&l.bwd_out),
        })
        .collect();
    let keys = pass.keys.into_iter().next().expect("one row");
    Ok(EncoderStates {
        embeddings,
        layers,
        keys,
    })
}

/// Bilinear attention of the previous top decoder state over the keys.
/// Returns `(context, weights)`.
pub fn attend<T: Scalar>(
    model: &NmtModel<T>,
    keys: &Tensor<T>,
    d_prev: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let k = model.hidden_size();
    if keys.rows() == 0 {
        return Err(Error::Empty("encoder states"));
    }
    if d_prev.len() != k || keys.cols() != k {
        return Err(Error::DimMismatch {
            context: "attend".into(),
            expected: k,
            found: d_prev.len(),
        });
    }
    let w = &model.attn_score.value;
    let query: Vec<T> = (0..k)
        .map(|j| (0..k).map(|i| d_prev[i] * w.row(i)[j]).sum())
        .collect();
    Ok(attend_row(keys, &query))
}

/// Decoder state across layers for a single sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderCarry<T> {
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
}

impl<T: Scalar> DecoderCarry<T> {
    pub fn zeros(model: &NmtModel<T>) -> Self {
        let z = vec![T::zero(); model.hidden_size()];
        DecoderCarry {
            h: vec![z.clone(); model.num_layers()],
            c: vec![z; model.num_layers()],
        }
    }

    fn to_state(&self) -> DecoderState<T> {
        let t = |v: &Vec<Vec<T>>| v.iter().map(|r| Tensor::row_vector(r.clone())).collect();
        DecoderState {
            h: t(&self.h),
            c: t(&self.c),
        }
    }

    fn from_state(s: &DecoderState<T>) -> Self {
        let t = |v: &Vec<Tensor<T>>| v.iter().map(|r| r.row(0).to_vec()).collect();
        DecoderCarry {
            h: t(&s.h),
            c: t(&s.c),
        }
    }
}

/// One decoder step: attention from the carried top state, then the stacked
/// LSTM over `[embedding(prev); context]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    pub logits: Vec<T>,
    pub context: Vec<T>,
    pub weights: Vec<T>,
    pub state: DecoderCarry<T>,
}

pub fn decode_step<T: Scalar>(
    model: &NmtModel<T>,
    keys: &Tensor<T>,
    state: &DecoderCarry<T>,
    prev: usize,
) -> Result<StepOutput<T>> {
    let keys = [keys.clone()];
    let (step, next, logits) = decoder_step(model, &keys, &state.to_state(), &[prev], None, None)?;
    Ok(StepOutput {
        logits: logits.row(0).to_vec(),
        context: step.context.row(0).to_vec(),
        weights: step.weights.into_iter().next().expect("one row"),
        state: DecoderCarry::from_state(&next),
    })
}

/// Teacher-forced pass with inputs `[BOS, t_1..t_M]`; entry `j` holds the
/// state after consuming input `j` and the loss of predicting output `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTrace<T> {
    /// `states[l]` is `[(M+1) × k]`.
    pub states: Vec<Tensor<T>>,
    pub contexts: Tensor<T>,
    pub weights: Vec<Vec<T>>,
    pub losses: Vec<f64>,
}

impl<T: Scalar> DecoderTrace<T> {
    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }
}

pub fn teacher_forced_trace<T: Scalar>(
    model: &NmtModel<T>,
    src: &[usize],
    tgt: &[usize],
) -> Result<DecoderTrace<T>> {
    let enc = encode(model, src)?;
    let k = model.hidden_size();
    let steps = tgt.len() + 1;
    let mut states = vec![Tensor::zeros(&[steps, k]); model.num_layers()];
    let mut contexts = Tensor::zeros(&[steps, k]);
    let mut weights = Vec::with_capacity(steps);
    let mut losses = Vec::with_capacity(steps);
    let mut carry = DecoderCarry::zeros(model);
    for j in 0..steps {
        let input = if j == 0 { BOS } else { tgt[j - 1] };
        let output = if j == tgt.len() { EOS } else { tgt[j] };
        let out = decode_step(model, &enc.keys, &carry, input)?;
        losses.push(cross_entropy(&out.logits, output)?.to_f64().unwrap());
        for (l, s) in states.iter_mut().enumerate() {
            s.row_mut(j).copy_from_slice(&out.state.h[l]);
        }
        contexts.row_mut(j).copy_from_slice(&out.context);
        weights.push(out.weights);
        carry = out.state;
    }
    Ok(DecoderTrace {
        states,
        contexts,
        weights,
        losses,
    })
}

/// Argmax decoding from BOS until EOS or `max_len` units. PAD and BOS are
/// never emitted; ties go to the lowest id.
pub fn translate_greedy<T: Scalar>(
    model: &NmtModel<T>,
    src: &[usize],
    max_len: usize,
) -> Result<Vec<usize>> {
    let enc = encode(model, src)?;
    let mut carry = DecoderCarry::zeros(model);
    let mut prev = BOS;
    let mut out = Vec::new();
    while out.len() < max_len {
        let step = decode_step(model, &enc.keys, &carry, prev)?;
        let mut best: Option<usize> = None;
        for (id, &v) in step.logits.iter().enumerate() {
            if id != PAD && id != BOS && best.is_none_or(|b| v > step.logits[b]) {
                best = Some(id);
            }
        }
        let best = best.unwrap_or(EOS);
        if best == EOS {
            break;
        }
        out.push(best);
        prev = best;
        carry = step.state;
    }
    Ok(out)
}
