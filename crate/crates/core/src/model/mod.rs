//! Miniature encoder-decoder transformer.
//!
//! Pre-norm residual blocks with scale-only RMS normalisation, sinusoidal
//! positions, multi-head attention without biases, ReLU feed-forward layers
//! and an output projection tied to the embedding. The backward pass is
//! written by hand and checked against central differences in double
//! precision; training runs in single precision.

mod adam;
mod batch;
mod checkpoint;
mod layers;
mod params;
mod transformer;
mod vocab;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batch::{Batch, EncodedPair};
pub use checkpoint::{inspect, read_container, write_container, ContainerSummary, TensorInfo, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{positional_encoding, softmax_rows, softmax_xent};
pub use params::{Attention, DecoderLayer, EncoderLayer, FeedForward, Params};
pub use transformer::{ForwardOutput, Model};
pub use vocab::{build_vocab, prefix_token, Vocab, BOS, EOS, PAD, UNK};

/// Scalar type of a model: `f32` for training, `f64` for gradient checks.
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Float for f32 {}
impl Float for f64 {}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_ff: usize,
    pub max_src_len: usize,
    /// Maximum decoder length, counting the end-of-sequence token.
    pub max_tgt_len: usize,
    /// Set from the vocabulary when a model is built from data.
    #[serde(default)]
    pub vocab_size: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelConfig {
    /// Desk-scale default for a given vocabulary.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            d_model: 32,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            d_ff: 64,
            max_src_len: 40,
            max_tgt_len: 40,
            vocab_size,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 || self.vocab_size == 0 {
            return bad("sizes must be positive".into());
        }
        if self.n_enc_layers == 0 || self.n_dec_layers == 0 {
            return bad("layer counts must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.max_src_len < 2 || self.max_tgt_len < 2 {
            return bad("maximum lengths must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.vocab_size < Vocab::n_reserved() {
            return bad(format!("vocab_size {} below the {} reserved tokens", self.vocab_size, Vocab::n_reserved()));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// A trained or initialised model together with its vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub vocab: Vocab,
    pub model: Model<f32>,
}

impl ModelState {
    pub fn new(vocab: Vocab, model: Model<f32>) -> Result<Self, ModelError> {
        if vocab.len() != model.config().vocab_size {
            return Err(ModelError::Config(format!(
                "vocabulary has {} tokens, model expects {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        Ok(Self { vocab, model })
    }
}
