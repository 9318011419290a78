//! Attentional encoder-decoder: stacked bidirectional LSTM encoder, bilinear
//! attention over the projected top layer, stacked LSTM decoder.

mod checkpoint;
mod config;
mod graph;
mod infer;
mod model;
mod train;

pub use checkpoint::Checkpoint;
pub use config::NmtConfig;
pub use infer::{
    attend, decode_step, encode, teacher_forced_trace, translate_greedy, DecoderCarry,
    DecoderTrace, EncoderStates, LayerStates, StepOutput,
};
pub use model::{init_random, BiLstm, NmtModel};
pub use train::{
    corpus_loss, train, train_with, write_training_log, EncodedPair, EpochLog, TrainOutcome,
};

/// Teacher-forced summed loss over a batch; with `backward`, accumulates the
/// gradient of `total / batch_size` into the model. Exposed for gradient
/// checks.
pub fn batch_loss<T: crate::numerics::Scalar>(
    model: &mut NmtModel<T>,
    src: &[&[usize]],
    tgt: &[&[usize]],
    backward: bool,
) -> crate::Result<(f64, usize)> {
    let l = graph::batch_loss(model, src, tgt, None, backward)?;
    Ok((l.total, l.tokens))
}
