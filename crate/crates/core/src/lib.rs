//! Attentional sequence-to-sequence translation models, frozen-representation
//! extraction, and linear probing classifiers for linguistic tagging and
//! relation labeling.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: parallel corpora, vocabularies, segmentation into
//!   translation units (word, BPE, morpheme, character) and annotation files.
//! * [`numerics`]: a small dense tensor substrate with hand-derived gradients
//!   for affine maps, LSTM cells, softmax and cross-entropy, plus optimizers.
//! * [`nmt`]: the stacked bidirectional LSTM encoder, bilinear attention and
//!   stacked LSTM decoder, with training, checkpointing and greedy decoding.
//! * [`extraction`]: per-word, per-layer feature vectors from a frozen model.
//! * [`probe`]: multiclass logistic regression trained on those features.
//! * [`analysis`]: baselines, binned accuracies, significance tests and BLEU.
//! * [`synthetic`]: generators for the toy tasks used by tests and demos.

pub mod analysis;
pub mod corpus;
mod error;
pub mod extraction;
pub mod nmt;
pub mod numerics;
pub mod probe;
pub mod synthetic;

pub use error::{Error, Result};
