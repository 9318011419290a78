//! Batched teacher-forced forward pass with cached activations and the
//! matching hand-written backward pass.
//!
//! Sequences in a batch are padded to a common length; a per-step row mask
//! freezes the recurrent state of finished rows, removes padded targets from
//! the loss and hides padded source positions from attention.

use super::model::NmtModel;
use crate::corpus::{BOS, EOS, PAD};
use crate::numerics::{
    dropout, gemm, lstm_backward, lstm_forward, softmax_cross_entropy_batch, softmax_row,
    LstmCache, Scalar, SeededRng, Tensor,
};
use crate::{Error, Result};

/// Training-mode dropout; absent at inference.
pub(crate) struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut SeededRng,
}

fn maybe_drop<T: Scalar>(
    x: Tensor<T>,
    drop: &mut Option<&mut Dropout<'_>>,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    match drop {
        Some(d) => dropout(&x, d.rate, true, d.rng),
        None => Ok((x, None)),
    }
}

fn apply_mask<T: Scalar>(x: &mut Tensor<T>, mask: &Option<Tensor<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.data_mut().iter_mut().zip(m.data()) {
            *v *= k;
        }
    }
}

fn gather<T: Scalar>(table: &Tensor<T>, ids: &[usize]) -> Result<Tensor<T>> {
    let e = table.cols();
    let mut out = Tensor::zeros(&[ids.len(), e]);
    for (r, &id) in ids.iter().enumerate() {
        if id >= table.rows() {
            return Err(Error::IndexOutOfRange {
                index: id,
                len: table.rows(),
            });
        }
        out.row_mut(r).copy_from_slice(table.row(id));
    }
    Ok(out)
}

fn scatter_add<T: Scalar>(table: &mut Tensor<T>, ids: &[usize], d: &Tensor<T>) {
    for (r, &id) in ids.iter().enumerate() {
        for (g, &v) in table.row_mut(id).iter_mut().zip(d.row(r)) {
            *g += v;
        }
    }
}

fn add_into<T: Scalar>(a: &mut Tensor<T>, b: &Tensor<T>) {
    for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}

pub(crate) struct EncoderLayerPass<T> {
    /// Dropout mask applied to this layer's input at each position.
    in_masks: Vec<Option<Tensor<T>>>,
    pub fwd_out: Vec<Tensor<T>>,
    pub bwd_out: Vec<Tensor<T>>,
    fwd_cache: Vec<LstmCache<T>>,
    bwd_cache: Vec<LstmCache<T>>,
}

pub(crate) struct EncoderPass<T> {
    pub lengths: Vec<usize>,
    pub ids: Vec<Vec<usize>>,
    pub layers: Vec<EncoderLayerPass<T>>,
    /// Top-layer `[fwd; bwd]` per position, `[B × 2k]`.
    top: Vec<Tensor<T>>,
    /// Per batch row: projected top states `[n_b × k]`.
    pub keys: Vec<Tensor<T>>,
}

pub(crate) fn encoder_forward<T: Scalar>(
    m: &NmtModel<T>,
    src: &[&[usize]],
    mut drop: Option<&mut Dropout<'_>>,
) -> Result<EncoderPass<T>> {
    let b = src.len();
    let k = m.hidden_size();
    let lengths: Vec<usize> = src.iter().map(|s| s.len()).collect();
    if b == 0 || lengths.contains(&0) {
        return Err(Error::Empty("source unit sequence"));
    }
    let t_max = *lengths.iter().max().unwrap();
    let masks: Vec<Vec<T>> = (0..t_max)
        .map(|t| {
            lengths
                .iter()
                .map(|&n| if t < n { T::one() } else { T::zero() })
                .collect()
        })
        .collect();
    let ids: Vec<Vec<usize>> = (0..t_max)
        .map(|t| {
            src.iter()
                .map(|s| s.get(t).copied().unwrap_or(PAD))
                .collect()
        })
        .collect();
    let mut inputs = ids
        .iter()
        .map(|row| gather(&m.src_embed.value, row))
        .collect::<Result<Vec<_>>>()?;

    let mut layers = Vec::with_capacity(m.num_layers());
    for bi in &m.encoder {
        let mut in_masks = Vec::with_capacity(t_max);
        let mut xs = Vec::with_capacity(t_max);
        for x in inputs {
            let (y, mask) = maybe_drop(x, &mut drop)?;
            xs.push(y);
            in_masks.push(mask);
        }
        let mut fwd_out = Vec::with_capacity(t_max);
        let mut fwd_cache = Vec::with_capacity(t_max);
        let (mut h, mut c) = (Tensor::zeros(&[b, k]), Tensor::zeros(&[b, k]));
        for t in 0..t_max {
            let (h2, c2, cache) = lstm_forward(&bi.forward, &xs[t], &h, &c, Some(&masks[t]))?;
            fwd_out.push(h2.clone());
            fwd_cache.push(cache);
            h = h2;
            c = c2;
        }
        let mut bwd_out = Vec::with_capacity(t_max);
        let mut bwd_cache = Vec::with_capacity(t_max);
        let (mut h, mut c) = (Tensor::zeros(&[b, k]), Tensor::zeros(&[b, k]));
        for t in (0..t_max).rev() {
            let (h2, c2, cache) = lstm_forward(&bi.backward, &xs[t], &h, &c, Some(&masks[t]))?;
            bwd_out.push(h2.clone());
            bwd_cache.push(cache);
            h = h2;
            c = c2;
        }
        bwd_out.reverse();
        bwd_cache.reverse();
        inputs = (0..t_max)
            .map(|t| Tensor::concat_cols(&fwd_out[t], &bwd_out[t]))
            .collect::<Result<Vec<_>>>()?;
        layers.push(EncoderLayerPass {
            in_masks,
            fwd_out,
            bwd_out,
            fwd_cache,
            bwd_cache,
        });
    }
    let top = inputs;
    let mut keys: Vec<Tensor<T>> = lengths.iter().map(|&n| Tensor::zeros(&[n, k])).collect();
    for (t, h) in top.iter().enumerate() {
        let mut p = Tensor::zeros(&[b, k]);
        gemm(
            T::one(),
            h,
            false,
            &m.attn_proj.value,
            false,
            T::zero(),
            &mut p,
        )?;
        for (r, key) in keys.iter_mut().enumerate() {
            if t < lengths[r] {
                key.row_mut(t).copy_from_slice(p.row(r));
            }
        }
    }
    Ok(EncoderPass {
        lengths,
        ids,
        layers,
        top,
        keys,
    })
}

/// Softmax attention of one query over one row's keys.
/// Returns `(context, weights)`.
pub(crate) fn attend_row<T: Scalar>(keys: &Tensor<T>, query: &[T]) -> (Vec<T>, Vec<T>) {
    let scores: Vec<T> = (0..keys.rows())
        .map(|t| keys.row(t).iter().zip(query).map(|(&a, &b)| a * b).sum())
        .collect();
    let w = softmax_row(&scores);
    let mut ctx = vec![T::zero(); keys.cols()];
    for (t, &wt) in w.iter().enumerate() {
        for (c, &v) in ctx.iter_mut().zip(keys.row(t)) {
            *c += wt * v;
        }
    }
    (ctx, w)
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderState<T> {
    pub h: Vec<Tensor<T>>,
    pub c: Vec<Tensor<T>>,
}

impl<T: Scalar> DecoderState<T> {
    pub fn zeros(layers: usize, b: usize, k: usize) -> Self {
        DecoderState {
            h: vec![Tensor::zeros(&[b, k]); layers],
            c: vec![Tensor::zeros(&[b, k]); layers],
        }
    }
}

pub(crate) struct DecoderStep<T> {
    in_ids: Vec<usize>,
    d_prev: Tensor<T>,
    query: Tensor<T>,
    pub weights: Vec<Vec<T>>,
    pub context: Tensor<T>,
    emb_mask: Option<Tensor<T>>,
    /// Dropout masks on the inputs of layers 1.. (index 0 unused).
    in_masks: Vec<Option<Tensor<T>>>,
    caches: Vec<LstmCache<T>>,
    top_mask: Option<Tensor<T>>,
    top_dropped: Tensor<T>,
}

pub(crate) fn decoder_step<T: Scalar>(
    m: &NmtModel<T>,
    keys: &[Tensor<T>],
    state: &DecoderState<T>,
    in_ids: &[usize],
    mask: Option<&[T]>,
    mut drop: Option<&mut Dropout<'_>>,
) -> Result<(DecoderStep<T>, DecoderState<T>, Tensor<T>)> {
    let b = in_ids.len();
    let k = m.hidden_size();
    let layers = m.num_layers();
    let d_prev = state.h[layers - 1].clone();
    let mut query = Tensor::zeros(&[b, k]);
    gemm(
        T::one(),
        &d_prev,
        false,
        &m.attn_score.value,
        false,
        T::zero(),
        &mut query,
    )?;
    let mut context = Tensor::zeros(&[b, k]);
    let mut weights = Vec::with_capacity(b);
    for (r, key) in keys.iter().enumerate() {
        let (ctx, w) = attend_row(key, query.row(r));
        context.row_mut(r).copy_from_slice(&ctx);
        weights.push(w);
    }
    let emb = gather(&m.tgt_embed.value, in_ids)?;
    let (emb, emb_mask) = maybe_drop(emb, &mut drop)?;
    let mut x = Tensor::concat_cols(&emb, &context)?;
    let mut in_masks = vec![None];
    let mut caches = Vec::with_capacity(layers);
    let mut next = DecoderState {
        h: Vec::with_capacity(layers),
        c: Vec::with_capacity(layers),
    };
    for (l, cell) in m.decoder.iter().enumerate() {
        if l > 0 {
            let (y, mk) = maybe_drop(x, &mut drop)?;
            x = y;
            in_masks.push(mk);
        }
        let (h, c, cache) = lstm_forward(cell, &x, &state.h[l], &state.c[l], mask)?;
        caches.push(cache);
        x = h.clone();
        next.h.push(h);
        next.c.push(c);
    }
    let (top_dropped, top_mask) = maybe_drop(x, &mut drop)?;
    let mut logits = Tensor::zeros(&[b, m.config().tgt_vocab_size]);
    for r in 0..b {
        logits.row_mut(r).copy_from_slice(m.out_b.value.data());
    }
    gemm(
        T::one(),
        &top_dropped,
        false,
        &m.out_w.value,
        false,
        T::one(),
        &mut logits,
    )?;
    let step = DecoderStep {
        in_ids: in_ids.to_vec(),
        d_prev,
        query,
        weights,
        context,
        emb_mask,
        in_masks,
        caches,
        top_mask,
        top_dropped,
    };
    Ok((step, next, logits))
}

/// Decoder inputs `[BOS, t_1..t_M]` and outputs `[t_1..t_M, EOS]`, padded.
pub(crate) struct TeacherForcing<T> {
    pub inputs: Vec<Vec<usize>>,
    pub outputs: Vec<Vec<usize>>,
    pub masks: Vec<Vec<T>>,
}

pub(crate) fn teacher_forcing<T: Scalar>(tgt: &[&[usize]]) -> TeacherForcing<T> {
    let steps = tgt.iter().map(|t| t.len() + 1).max().unwrap_or(0);
    let mut tf = TeacherForcing {
        inputs: Vec::with_capacity(steps),
        outputs: Vec::with_capacity(steps),
        masks: Vec::with_capacity(steps),
    };
    for j in 0..steps {
        let mut inp = Vec::with_capacity(tgt.len());
        let mut out = Vec::with_capacity(tgt.len());
        let mut mask = Vec::with_capacity(tgt.len());
        for t in tgt {
            if j <= t.len() {
                inp.push(if j == 0 { BOS } else { t[j - 1] });
                out.push(if j == t.len() { EOS } else { t[j] });
                mask.push(T::one());
            } else {
                inp.push(PAD);
                out.push(PAD);
                mask.push(T::zero());
            }
        }
        tf.inputs.push(inp);
        tf.outputs.push(out);
        tf.masks.push(mask);
    }
    tf
}

/// Summed token loss, token count and per-step summed losses.
pub(crate) struct BatchLoss {
    pub total: f64,
    pub tokens: usize,
}

/// Teacher-forced loss over a batch; with `backward` set, accumulates the
/// gradient of `total / batch_size` into the parameters.
pub(crate) fn batch_loss<T: Scalar>(
    m: &mut NmtModel<T>,
    src: &[&[usize]],
    tgt: &[&[usize]],
    mut drop: Option<&mut Dropout<'_>>,
    backward: bool,
) -> Result<BatchLoss> {
    if src.len() != tgt.len() {
        return Err(Error::ShapeMismatch {
            op: "batch",
            left: vec![src.len()],
            right: vec![tgt.len()],
        });
    }
    let b = src.len();
    let layers = m.num_layers();
    let k = m.hidden_size();
    let enc = encoder_forward(m, src, drop.as_deref_mut())?;
    let tf = teacher_forcing::<T>(tgt);
    let scale = T::one() / T::from_usize(b).unwrap();
    let mut state = DecoderState::zeros(layers, b, k);
    let mut steps = Vec::with_capacity(tf.inputs.len());
    let mut dlogits = Vec::with_capacity(tf.inputs.len());
    let mut total = 0.0;
    for j in 0..tf.inputs.len() {
        let (step, next, logits) = decoder_step(
            m,
            &enc.keys,
            &state,
            &tf.inputs[j],
            Some(&tf.masks[j]),
            drop.as_deref_mut(),
        )?;
        let (loss, dl) = softmax_cross_entropy_batch(&logits, &tf.outputs[j], &tf.masks[j], scale)?;
        total += loss;
        state = next;
        if backward {
            steps.push(step);
            dlogits.push(dl);
        }
    }
    let tokens = tgt.iter().map(|t| t.len() + 1).sum();
    if backward {
        backward_pass(m, &enc, &steps, &dlogits)?;
    }
    Ok(BatchLoss { total, tokens })
}

fn backward_pass<T: Scalar>(
    m: &mut NmtModel<T>,
    enc: &EncoderPass<T>,
    steps: &[DecoderStep<T>],
    dlogits: &[Tensor<T>],
) -> Result<()> {
    let layers = m.num_layers();
    let k = m.hidden_size();
    let e = m.embedding_size();
    let b = enc.lengths.len();
    let mut dh: Vec<Tensor<T>> = vec![Tensor::zeros(&[b, k]); layers];
    let mut dc: Vec<Tensor<T>> = vec![Tensor::zeros(&[b, k]); layers];
    let mut dkeys: Vec<Tensor<T>> = enc
        .lengths
        .iter()
        .map(|&n| Tensor::zeros(&[n, k]))
        .collect();

    for (s, dl) in steps.iter().zip(dlogits).rev() {
        gemm(
            T::one(),
            &s.top_dropped,
            true,
            dl,
            false,
            T::one(),
            &mut m.out_w.grad,
        )?;
        {
            let gb = m.out_b.grad.data_mut();
            for r in 0..b {
                for (g, &d) in gb.iter_mut().zip(dl.row(r)) {
                    *g += d;
                }
            }
        }
        let mut d_out = Tensor::zeros(&[b, k]);
        gemm(
            T::one(),
            dl,
            false,
            &m.out_w.value,
            true,
            T::zero(),
            &mut d_out,
        )?;
        apply_mask(&mut d_out, &s.top_mask);
        add_into(&mut d_out, &dh[layers - 1]);

        for l in (0..layers).rev() {
            let (mut dx, dhp, dcp) =
                lstm_backward(&mut m.decoder[l], &s.caches[l], &d_out, &dc[l])?;
            dh[l] = dhp;
            dc[l] = dcp;
            if l > 0 {
                apply_mask(&mut dx, &s.in_masks[l]);
                add_into(&mut dx, &dh[l - 1]);
                d_out = dx;
                continue;
            }
            let (mut d_emb, d_ctx) = dx.split_cols(e);
            apply_mask(&mut d_emb, &s.emb_mask);
            scatter_add(&mut m.tgt_embed.grad, &s.in_ids, &d_emb);

            let mut dq = Tensor::zeros(&[b, k]);
            for (r, dkey) in dkeys.iter_mut().enumerate().take(b) {
                let w = &s.weights[r];
                let keys = &enc.keys[r];
                let dctx = d_ctx.row(r);
                let q = s.query.row(r);
                let dw: Vec<T> = (0..keys.rows())
                    .map(|t| keys.row(t).iter().zip(dctx).map(|(&a, &c)| a * c).sum())
                    .collect();
                let dot: T = w.iter().zip(&dw).map(|(&a, &c)| a * c).sum();
                let dqr = dq.row_mut(r);
                for t in 0..keys.rows() {
                    let ds = w[t] * (dw[t] - dot);
                    let kr = keys.row(t);
                    let dk = dkey.row_mut(t);
                    for j in 0..k {
                        dk[j] += w[t] * dctx[j] + ds * q[j];
                        dqr[j] += ds * kr[j];
                    }
                }
            }
            gemm(
                T::one(),
                &s.d_prev,
                true,
                &dq,
                false,
                T::one(),
                &mut m.attn_score.grad,
            )?;
            let mut dd = Tensor::zeros(&[b, k]);
            gemm(
                T::one(),
                &dq,
                false,
                &m.attn_score.value,
                true,
                T::zero(),
                &mut dd,
            )?;
            add_into(&mut dh[layers - 1], &dd);
        }
    }

    // encoder
    let t_max = enc.top.len();
    let mut d_next: Vec<Tensor<T>> = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let mut dp = Tensor::zeros(&[b, k]);
        for (r, dk) in dkeys.iter().enumerate() {
            if t < enc.lengths[r] {
                dp.row_mut(r).copy_from_slice(dk.row(t));
            }
        }
        gemm(
            T::one(),
            &enc.top[t],
            true,
            &dp,
            false,
            T::one(),
            &mut m.attn_proj.grad,
        )?;
        let mut dt = Tensor::zeros(&[b, 2 * k]);
        gemm(
            T::one(),
            &dp,
            false,
            &m.attn_proj.value,
            true,
            T::zero(),
            &mut dt,
        )?;
        d_next.push(dt);
    }
    for l in (0..layers).rev() {
        let pass = &enc.layers[l];
        let cell = &mut m.encoder[l];
        let halves: Vec<(Tensor<T>, Tensor<T>)> = d_next.iter().map(|d| d.split_cols(k)).collect();
        let mut dx_all: Vec<Option<Tensor<T>>> = vec![None; t_max];
        let mut accumulate = |t: usize, dx: Tensor<T>| match &mut dx_all[t] {
            Some(acc) => add_into(acc, &dx),
            slot @ None => *slot = Some(dx),
        };
        let (mut dhr, mut dcr) = (Tensor::zeros(&[b, k]), Tensor::zeros(&[b, k]));
        for t in (0..t_max).rev() {
            let mut dht = halves[t].0.clone();
            add_into(&mut dht, &dhr);
            let (dx, dhp, dcp) = lstm_backward(&mut cell.forward, &pass.fwd_cache[t], &dht, &dcr)?;
            accumulate(t, dx);
            dhr = dhp;
            dcr = dcp;
        }
        let (mut dhr, mut dcr) = (Tensor::zeros(&[b, k]), Tensor::zeros(&[b, k]));
        for (t, half) in halves.iter().enumerate() {
            let mut dht = half.1.clone();
            add_into(&mut dht, &dhr);
            let (dx, dhp, dcp) = lstm_backward(&mut cell.backward, &pass.bwd_cache[t], &dht, &dcr)?;
            accumulate(t, dx);
            dhr = dhp;
            dcr = dcp;
        }
        let mut dxs: Vec<Tensor<T>> = dx_all.into_iter().map(|d| d.unwrap()).collect();
        for (dx, mask) in dxs.iter_mut().zip(&pass.in_masks) {
            apply_mask(dx, mask);
        }
        if l > 0 {
            d_next = dxs;
        } else {
            for (t, dx) in dxs.iter().enumerate() {
                scatter_add(&mut m.src_embed.grad, &enc.ids[t], dx);
            }
        }
    }
    Ok(())
}
