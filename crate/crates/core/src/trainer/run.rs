use std::io::Write;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{early_stop, lr_at, Checkpoint, Stage, TrainConfig, TrainError};
use crate::corpus::{split_train_eval, CuratedDataset};
use crate::model::{adam_step, AdamConfig, AdamState, Batch, EncodedPair, Model, ModelConfig, ModelError, ModelState, Vocab};
use crate::rng;

/// Examples as token ids, with truncation and vocabulary coverage counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodedDataset {
    pub pairs: Vec<EncodedPair>,
    /// Examples longer than the model's source or target limit.
    pub truncated: usize,
    pub unknown_tokens: usize,
    pub total_tokens: usize,
}

impl EncodedDataset {
    pub fn truncation_rate(&self) -> f64 {
        if self.pairs.is_empty() { 0.0 } else { self.truncated as f64 / self.pairs.len() as f64 }
    }

    pub fn unknown_rate(&self) -> f64 {
        if self.total_tokens == 0 { 0.0 } else { self.unknown_tokens as f64 / self.total_tokens as f64 }
    }
}

pub fn encode_dataset(vocab: &Vocab, dataset: &CuratedDataset, config: &ModelConfig) -> EncodedDataset {
    let mut out = EncodedDataset::default();
    for ex in &dataset.examples {
        let pair = EncodedPair::new(vocab, &ex.input_text, &ex.target_text);
        out.truncated += usize::from(pair.exceeds(config));
        out.unknown_tokens += pair.src.iter().chain(&pair.tgt).filter(|&&id| id == Vocab::UNK_ID).count();
        out.total_tokens += pair.src.len() + pair.tgt.len();
        out.pairs.push(pair);
    }
    out
}

/// Token-weighted mean loss over `pairs` in fixed batches of `batch_size`;
/// `+inf` for an empty set.
fn pairs_loss(model: &Model<f32>, pairs: &[EncodedPair], batch_size: usize) -> Result<f64, ModelError> {
    let (mut total, mut count) = (0f64, 0usize);
    for chunk in pairs.chunks(batch_size.max(1)) {
        let out = model.forward_loss(&Batch::from_pairs(chunk, model.config()))?;
        total += out.loss * out.token_count as f64;
        count += out.token_count;
    }
    Ok(if count == 0 { f64::INFINITY } else { total / count as f64 })
}

pub fn eval_loss(state: &ModelState, eval_set: &CuratedDataset, batch_size: usize) -> Result<f64, TrainError> {
    if eval_set.is_empty() {
        warn!("evaluation set is empty; its loss is +inf");
    }
    let encoded = encode_dataset(&state.vocab, eval_set, state.model.config());
    Ok(pairs_loss(&state.model, &encoded.pairs, batch_size)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub loss: f64,
}

/// One run-log line, written at every evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the steps since the previous entry.
    pub train_loss: Option<f64>,
    pub eval_loss: f64,
}

pub fn write_run_log<W: Write>(mut out: W, log: &[LogEntry]) -> std::io::Result<()> {
    for entry in log {
        serde_json::to_writer(&mut out, entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Lowest-eval-loss state; the final state when there is no eval data.
    pub checkpoint: Checkpoint,
    /// Includes the evaluation before the first update.
    pub history: Vec<EvalPoint>,
    pub train_losses: Vec<f64>,
    pub log: Vec<LogEntry>,
    pub stopped_early: bool,
    pub steps: u64,
    pub truncation_rate: f64,
    pub unknown_rate: f64,
}

impl TrainOutcome {
    pub fn eval_losses(&self) -> Vec<f64> {
        self.history.iter().map(|p| p.loss).collect()
    }
}

/// A freshly initialised model whose vocabulary is built from `dataset`.
pub fn fresh_checkpoint(dataset: &CuratedDataset, arch: &ModelConfig, config: &TrainConfig) -> Result<Checkpoint, TrainError> {
    let vocab = Vocab::build(&dataset.examples, config.vocab_min_count);
    let model_config = ModelConfig { vocab_size: vocab.len(), ..arch.clone() };
    let model = Model::init(model_config, config.seed)?;
    Ok(Checkpoint { state: ModelState::new(vocab, model)?, train_config: config.clone(), step: 0, best_eval_loss: f64::INFINITY })
}

/// Pretraining from scratch on a mixed-prefix dataset, holding out
/// `eval_fraction` of it for evaluation.
pub fn pretrain(dataset: &CuratedDataset, arch: &ModelConfig, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    if config.stage != Stage::Pretrain {
        return Err(TrainError::Config("pretrain requires stage PRETRAIN".into()));
    }
    config.validate()?;
    let (train, eval) = split_train_eval(dataset, config.eval_fraction, config.seed)?;
    let start = fresh_checkpoint(&train, arch, config)?;
    info!("pretraining on {} examples ({} held out), vocabulary {}", train.len(), eval.len(), start.state.vocab.len());
    train_from(&start, &train, &eval, config)
}

/// Fine-tuning all parameters of `start` on a single-prefix task.
pub fn finetune(start: &Checkpoint, task: &CuratedDataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    if config.stage != Stage::Finetune {
        return Err(TrainError::Config("finetune requires stage FINETUNE".into()));
    }
    config.validate()?;
    let prefixes = task.prefixes();
    if prefixes.len() > 1 {
        return Err(TrainError::Config(format!("task dataset mixes prefixes {prefixes:?}")));
    }
    let (train, eval) = split_train_eval(task, config.eval_fraction, config.seed)?;
    train_from(start, &train, &eval, config)
}

/// The shared loop: shuffled batches per epoch, Adam with warmup, periodic
/// evaluation and early stopping.
pub fn train_from(start: &Checkpoint, train: &CuratedDataset, eval: &CuratedDataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let vocab = &start.state.vocab;
    let arch = start.state.model.config();
    let train_enc = encode_dataset(vocab, train, arch);
    let eval_enc = encode_dataset(vocab, eval, arch);
    if train_enc.unknown_tokens > 0 {
        warn!("{} of {} training tokens are outside the vocabulary and map to UNK", train_enc.unknown_tokens, train_enc.total_tokens);
    }
    if train_enc.truncated > 0 {
        info!("{} of {} training examples exceed the length limits and are truncated", train_enc.truncated, train_enc.pairs.len());
    }
    if eval_enc.pairs.is_empty() {
        warn!("no evaluation data: eval loss is +inf, early stopping is off and the final state is kept");
    }

    let bs = config.batch_size;
    let n = train_enc.pairs.len();
    let steps_per_epoch = n.div_ceil(bs);
    let total = config.epochs * steps_per_epoch;
    let eval_every = config.eval_every.unwrap_or_else(|| steps_per_epoch.div_ceil(4).max(1));
    let with_eval = !eval_enc.pairs.is_empty();

    let mut model = start.state.model.clone();
    let snapshot = |model: &Model<f32>, step: u64, loss: f64| Checkpoint {
        state: ModelState { vocab: vocab.clone(), model: model.clone() },
        train_config: config.clone(),
        step,
        best_eval_loss: loss,
    };

    let initial = pairs_loss(&model, &eval_enc.pairs, bs)?;
    let mut history = vec![EvalPoint { step: 0, loss: initial }];
    let mut log = vec![LogEntry { step: 0, epoch: 0, lr: 0.0, train_loss: None, eval_loss: initial }];
    let mut best = snapshot(&model, 0, initial);
    let mut outcome = TrainOutcome {
        checkpoint: best.clone(),
        history: Vec::new(),
        train_losses: Vec::with_capacity(total),
        log: Vec::new(),
        stopped_early: false,
        steps: 0,
        truncation_rate: train_enc.truncation_rate(),
        unknown_rate: train_enc.unknown_rate(),
    };

    let adam = AdamConfig::default();
    let mut state = AdamState::new(model.params());
    let mut shuffle = rng::stream(config.seed, "shuffle");
    let mut dropout = rng::stream(config.seed, "dropout");
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0u64;
    let mut since_log = (0f64, 0usize);

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(bs) {
            step += 1;
            let pairs: Vec<EncodedPair> = chunk.iter().map(|&i| train_enc.pairs[i].clone()).collect();
            let batch = Batch::from_pairs(&pairs, arch);
            let (loss, grads) = model.loss_and_grad(&batch, Some(&mut dropout))?;
            let diverged = |message: String, model: &Model<f32>| TrainError::Diverged {
                step,
                message,
                last_good: Box::new(snapshot(model, step - 1, f64::NAN)),
            };
            if !loss.is_finite() {
                return Err(diverged(format!("training loss {loss}"), &model));
            }
            let lr = lr_at(step as usize, total, config.base_lr, config.warmup_fraction);
            let before = model.clone();
            if let Err(e) = adam_step(model.params_mut(), &grads, &mut state, lr, &adam) {
                return Err(diverged(e.to_string(), &before));
            }
            outcome.train_losses.push(loss);
            since_log.0 += loss;
            since_log.1 += 1;

            if step.is_multiple_of(eval_every as u64) || step == total as u64 {
                let e = pairs_loss(&model, &eval_enc.pairs, bs)?;
                if with_eval && !e.is_finite() {
                    return Err(diverged(format!("evaluation loss {e}"), &before));
                }
                debug!("step {step} lr {lr:.3e} eval {e:.5}");
                history.push(EvalPoint { step, loss: e });
                log.push(LogEntry { step, epoch, lr, train_loss: Some(since_log.0 / since_log.1 as f64), eval_loss: e });
                since_log = (0.0, 0);
                if e < best.best_eval_loss {
                    best = snapshot(&model, step, e);
                }
                let losses: Vec<f64> = history.iter().map(|p| p.loss).collect();
                if with_eval && config.early_stopping && early_stop(&losses, config.patience) {
                    info!("early stop at step {step}: no improvement in {} evaluations", config.patience);
                    outcome.stopped_early = true;
                    break 'epochs;
                }
            }
        }
    }

    outcome.checkpoint = if with_eval { best } else { snapshot(&model, step, f64::INFINITY) };
    outcome.history = history;
    outcome.log = log;
    outcome.steps = step;
    Ok(outcome)
}
