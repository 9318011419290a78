use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use super::graph::{batch_loss, Dropout};
use super::{Checkpoint, NmtConfig, NmtModel};
use crate::numerics::{clip_global_norm, seeded_rng, sgd_step, Parameterized, Scalar};
use crate::{Error, Result};

/// A sentence pair already mapped to vocabulary ids (no BOS/EOS).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Per-token mean over the epoch, with dropout active.
    pub train_loss: f64,
    pub valid_loss: f64,
    pub lr: f64,
}

pub fn write_training_log(path: impl AsRef<Path>, log: &[EpochLog]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("epoch,train_loss,valid_loss,lr\n");
    for e in log {
        s.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.train_loss, e.valid_loss, e.lr
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(s.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Batches of similar source length; membership is fixed, order is shuffled
/// each epoch.
fn make_batches(pairs: &[EncodedPair], batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by_key(|&i| (pairs[i].src.len(), pairs[i].tgt.len()));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

fn check_pairs(pairs: &[EncodedPair], config: &NmtConfig) -> Result<()> {
    for p in pairs {
        if p.src.is_empty() {
            return Err(Error::Empty("source sentence"));
        }
        if let Some(&id) = p.src.iter().find(|&&id| id >= config.src_vocab_size) {
            return Err(Error::IndexOutOfRange {
                index: id,
                len: config.src_vocab_size,
            });
        }
        if let Some(&id) = p.tgt.iter().find(|&&id| id >= config.tgt_vocab_size) {
            return Err(Error::IndexOutOfRange {
                index: id,
                len: config.tgt_vocab_size,
            });
        }
    }
    Ok(())
}

/// Per-token teacher-forced loss with dropout off.
pub fn corpus_loss<T: Scalar>(
    model: &NmtModel<T>,
    pairs: &[EncodedPair],
    batch_size: usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    check_pairs(pairs, model.config())?;
    // batch_loss only needs `&mut` for gradient accumulation, which is off here
    let mut scratch = model.clone();
    let (mut total, mut tokens) = (0.0, 0);
    for batch in make_batches(pairs, batch_size.max(1)) {
        let src: Vec<&[usize]> = batch.iter().map(|&i| pairs[i].src.as_slice()).collect();
        let tgt: Vec<&[usize]> = batch.iter().map(|&i| pairs[i].tgt.as_slice()).collect();
        let l = batch_loss(&mut scratch, &src, &tgt, None, false)?;
        total += l.total;
        tokens += l.tokens;
    }
    Ok(total / tokens as f64)
}

/// Minibatch SGD with teacher forcing, global-norm clipping and the decaying
/// schedule; keeps the parameters of the best validation epoch. An empty
/// validation set selects on training loss instead.
pub fn train(
    config: &NmtConfig,
    train: &[EncodedPair],
    valid: &[EncodedPair],
) -> Result<TrainOutcome> {
    train_with(config, train, valid, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    config: &NmtConfig,
    train: &[EncodedPair],
    valid: &[EncodedPair],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    check_pairs(train, config)?;
    check_pairs(valid, config)?;
    let mut model = NmtModel::<f32>::new(config)?;
    // separate stream so the initialization does not depend on data order
    let mut rng = seeded_rng(config.seed ^ 0x5eed_da7a_0000_0001);
    let mut batches = make_batches(train, config.batch_size);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=config.epochs {
        let lr = config.schedule.lr(epoch);
        batches.shuffle(&mut rng);
        let (mut total, mut tokens) = (0.0, 0);
        for (bi, batch) in batches.iter().enumerate() {
            let src: Vec<&[usize]> = batch.iter().map(|&i| train[i].src.as_slice()).collect();
            let tgt: Vec<&[usize]> = batch.iter().map(|&i| train[i].tgt.as_slice()).collect();
            model.zero_grad();
            let mut drop = Dropout {
                rate: config.dropout,
                rng: &mut rng,
            };
            let l = batch_loss(&mut model, &src, &tgt, Some(&mut drop), true)?;
            if !l.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi + 1,
                });
            }
            total += l.total;
            tokens += l.tokens;
            let mut params = model.parameters_mut();
            clip_global_norm(&mut params, config.clip_norm);
            sgd_step(&mut params, lr);
        }
        let train_loss = total / tokens as f64;
        let valid_loss = if valid.is_empty() {
            train_loss
        } else {
            corpus_loss(&model, valid, config.batch_size)?
        };
        if !valid_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let entry = EpochLog {
            epoch,
            train_loss,
            valid_loss,
            lr,
        };
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|b| valid_loss < b.valid_loss) {
            best = Some(Checkpoint {
                model: model.clone(),
                epoch,
                valid_loss,
            });
        }
    }
    Ok(TrainOutcome {
        best: best.expect("at least one epoch"),
        log,
    })
}
