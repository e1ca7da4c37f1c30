//! Two-stage training: multi-dataset pretraining, then per-task
//! fine-tuning. Linear warmup to a constant rate, periodic evaluation,
//! early stopping on strict improvement, best-checkpoint selection.

mod checkpoint;
mod record;
mod run;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::ModelError;

pub use checkpoint::Checkpoint;
pub use record::{read_run_records, write_run_records, RunRecord};
pub use run::{
    encode_dataset, eval_loss, finetune, fresh_checkpoint, pretrain, train_from, write_run_log, EncodedDataset, EvalPoint,
    LogEntry, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step}: {message}")]
    Diverged { step: u64, message: String, last_good: Box<Checkpoint> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrainError {
    /// Checkpoint saved before divergence, if any.
    pub fn last_good(&self) -> Option<&Checkpoint> {
        match self {
            Self::Diverged { last_good, .. } => Some(last_good),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "PRETRAIN")]
    Pretrain,
    #[serde(rename = "FINETUNE")]
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_fraction: f64,
    pub epochs: usize,
    /// Optimiser steps between evaluations; `None` means four per epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    pub patience: usize,
    pub seed: u64,
    pub early_stopping: bool,
    /// Share of the training data held out for evaluation.
    pub eval_fraction: f64,
    pub vocab_min_count: usize,
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        Self {
            stage: Stage::Pretrain,
            batch_size: 16,
            base_lr: 1e-4,
            warmup_fraction: 0.1,
            epochs: 10,
            eval_every: None,
            patience: 10,
            seed: 0,
            early_stopping: true,
            eval_fraction: 0.2,
            vocab_min_count: 1,
        }
    }

    pub fn finetune() -> Self {
        Self { stage: Stage::Finetune, batch_size: 8, epochs: 3, ..Self::pretrain() }
    }

    pub fn defaults(stage: Stage) -> Self {
        match stage {
            Stage::Pretrain => Self::pretrain(),
            Stage::Finetune => Self::finetune(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return bad(format!("warmup_fraction {} outside (0, 1)", self.warmup_fraction));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return bad(format!("base_lr {} must be positive", self.base_lr));
        }
        if self.eval_every == Some(0) {
            return bad("eval_every must be positive".into());
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return bad(format!("eval_fraction {} outside (0, 1)", self.eval_fraction));
        }
        Ok(())
    }

    /// Parses TOML; keys that are absent take the defaults of the `stage`
    /// key, which is required.
    pub fn from_toml_str(text: &str) -> Result<Self, TrainError> {
        let bad = |e: String| TrainError::Config(e);
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        let stage: Stage = table
            .get("stage")
            .ok_or_else(|| bad("missing `stage`".into()))?
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| bad(e.to_string()))?;
        let mut merged = toml::Table::try_from(Self::defaults(stage)).map_err(|e| bad(e.to_string()))?;
        merged.extend(table);
        let config: Self = merged.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Linear ramp from 0 to `base_lr` over `warmup_fraction * total_steps`
/// steps, then constant.
pub fn lr_at(step: usize, total_steps: usize, base_lr: f64, warmup_fraction: f64) -> f64 {
    let warmup = warmup_fraction * total_steps as f64;
    if warmup <= 0.0 {
        return base_lr;
    }
    base_lr * (step as f64 / warmup).min(1.0)
}

/// True once `patience` evaluations have passed since the first occurrence
/// of the minimum; only a strictly lower loss counts as improvement.
pub fn early_stop(history: &[f64], patience: usize) -> bool {
    let Some(best) = first_min_index(history) else { return false };
    history.len() - 1 - best >= patience
}

pub(crate) fn first_min_index(history: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in history.iter().enumerate() {
        if best.is_none_or(|b| v < history[b]) {
            best = Some(i);
        }
    }
    best
}
