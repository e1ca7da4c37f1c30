//! Text-to-text offensive language identification at desk scale.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: ingestion of SOLID-style and CCTK-style corpora, confidence
//!   filtering, label-scheme mapping, prefix merging and synthetic corpora.
//! - [`codec`]: sentence labels and `[OFF]`-marked token targets, and their
//!   decoding back to labels and character offsets.
//! - [`model`]: a miniature encoder-decoder transformer with hand-written
//!   backward pass, Adam, greedy decoding and a binary checkpoint format.
//! - [`trainer`]: two-stage training (multi-dataset pretraining, per-task
//!   fine-tuning) with warmup and early stopping.
//! - [`metrics`]: macro F1, character-offset F1 and run aggregation.
//! - [`harness`]: the threshold x dataset grid, zero-shot evaluation and
//!   report rendering.

pub mod codec;
pub mod corpus;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod trainer;

pub use codec::{CharSpanSet, CuratedExample, TaskKind};
pub use corpus::{CanonicalLabel, CuratedDataset, LabelValue, RawInstance, Scheme, Source};
