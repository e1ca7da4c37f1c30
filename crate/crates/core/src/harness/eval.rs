use rayon::prelude::*;

use super::HarnessError;
use crate::codec::{decode_sentence, decode_token, CharSpanSet, CuratedExample, PredictionRecord, TaskKind};
use crate::corpus::{scheme_of_prefix, CuratedDataset, LabelValue, Scheme};
use crate::metrics::{aggregate, char_offset_f1, macro_f1, LabelPairs, MetricsError, ScoreSummary};
use crate::model::{ModelState, Vocab, UNK};
use crate::trainer::Checkpoint;

/// Prefixes a pretrained checkpoint can be evaluated on without fine-tuning.
pub const ZERO_SHOT_PREFIXES: [&str; 2] = ["OLID_A", "CCTK"];

#[derive(Debug, Clone, PartialEq)]
pub struct TaskEval {
    /// Macro F1 for sentence tasks, character-offset F1 for token tasks.
    pub score: f64,
    /// Share of generations that did not parse.
    pub invalid_rate: f64,
    pub predictions: Vec<PredictionRecord>,
}

/// Scheme of a sentence test set: from its prefix when that names a
/// scheme, else `CCTK` iff some target is `TOX`.
pub fn task_scheme(test: &CuratedDataset) -> Scheme {
    if let Some(s) = test.prefixes().first().and_then(|p| scheme_of_prefix(p)) {
        return s;
    }
    if test.examples.iter().any(|e| e.target_text.trim() == LabelValue::Tox.as_str()) {
        Scheme::Cctk
    } else {
        Scheme::OlidA
    }
}

fn task_kind(test: &CuratedDataset) -> Result<TaskKind, HarnessError> {
    let first = test.examples.first().ok_or(MetricsError::Empty)?.task;
    if test.examples.iter().any(|e| e.task != first) {
        return Err(HarnessError::Spec("test set mixes sentence and token examples".into()));
    }
    Ok(first)
}

/// Replaces each `<unk>` of a generation with the next out-of-vocabulary
/// word of the original text, so echoed unknown words still align.
fn restore_unknowns(output: &str, original: &str, vocab: &Vocab) -> String {
    let mut unknown = original.split_whitespace().filter(|w| vocab.get(w).is_none());
    output
        .split_whitespace()
        .map(|t| if t == UNK { unknown.next().unwrap_or(t) } else { t })
        .collect::<Vec<_>>()
        .join(" ")
}

fn generate(state: &ModelState, ex: &CuratedExample) -> Result<String, HarnessError> {
    let src = state.vocab.encode(&ex.input_text);
    let max_len = state.model.config().max_tgt_len;
    let out = state.model.greedy_decode(&src, max_len)?;
    Ok(state.vocab.decode(&out))
}

fn gold_label(ex: &CuratedExample, scheme: Scheme) -> Result<LabelValue, HarnessError> {
    let value: LabelValue = ex.target_text.trim().parse()?;
    if !scheme.admits(value) {
        return Err(HarnessError::Spec(format!("{}: target {value} outside scheme {scheme}", ex.id)));
    }
    Ok(value)
}

fn gold_spans(ex: &CuratedExample) -> CharSpanSet {
    ex.gold_spans.clone().unwrap_or_else(|| decode_token(&ex.target_text, &ex.original_text).0)
}

/// Greedy-decodes every test example and scores the parsed outputs.
pub fn evaluate(state: &ModelState, test: &CuratedDataset) -> Result<TaskEval, HarnessError> {
    let kind = task_kind(test)?;
    let outputs: Vec<String> = test.examples.par_iter().map(|ex| generate(state, ex)).collect::<Result<_, _>>()?;
    let n = test.len();
    let (score, predictions) = match kind {
        TaskKind::Sentence => {
            let scheme = task_scheme(test);
            let (mut gold, mut pred, mut records) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for (ex, out) in test.examples.iter().zip(outputs) {
                let (label, ok) = decode_sentence(&out, scheme);
                gold.push(gold_label(ex, scheme)?);
                pred.push(label.value());
                records.push(PredictionRecord {
                    id: ex.id.clone(),
                    output_text: out,
                    label: Some(label.value().to_string()),
                    spans: None,
                    parse_ok: ok,
                });
            }
            (macro_f1(&LabelPairs::new(gold, pred)?, &scheme.labels())?, records)
        }
        TaskKind::Token => {
            let (mut pairs, mut records) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for (ex, out) in test.examples.iter().zip(outputs) {
                let restored = restore_unknowns(&out, &ex.original_text, &state.vocab);
                let (spans, ok) = decode_token(&restored, &ex.original_text);
                records.push(PredictionRecord {
                    id: ex.id.clone(),
                    output_text: out,
                    label: None,
                    spans: Some(spans.to_string()),
                    parse_ok: ok,
                });
                pairs.push((gold_spans(ex), spans));
            }
            (char_offset_f1(&pairs), records)
        }
    };
    let invalid = predictions.iter().filter(|p| !p.parse_ok).count();
    Ok(TaskEval { score, invalid_rate: invalid as f64 / n as f64, predictions })
}

/// Score of the constant predictor: the most frequent gold label for
/// sentence tasks (ties go to the positive class), no spans for token tasks.
pub fn majority_baseline(test: &CuratedDataset) -> Result<f64, HarnessError> {
    match task_kind(test)? {
        TaskKind::Sentence => {
            let scheme = task_scheme(test);
            let gold = test.examples.iter().map(|e| gold_label(e, scheme)).collect::<Result<Vec<_>, _>>()?;
            let [pos, neg] = scheme.labels();
            let n_pos = gold.iter().filter(|&&g| g == pos).count();
            let majority = if 2 * n_pos >= gold.len() { pos } else { neg };
            let pred = vec![majority; gold.len()];
            Ok(macro_f1(&LabelPairs::new(gold, pred)?, &scheme.labels())?)
        }
        TaskKind::Token => {
            let pairs: Vec<_> = test.examples.iter().map(|e| (gold_spans(e), CharSpanSet::new())).collect();
            Ok(char_offset_f1(&pairs))
        }
    }
}

/// Scores a pretrained checkpoint on a test set without any update.
pub fn zero_shot(ckpt: &Checkpoint, test: &CuratedDataset) -> Result<(ScoreSummary, TaskEval), HarnessError> {
    if let Some(p) = test.prefixes().into_iter().find(|p| !ZERO_SHOT_PREFIXES.contains(p)) {
        return Err(HarnessError::ZeroShotPrefix(p.to_string()));
    }
    let eval = evaluate(&ckpt.state, test)?;
    Ok((aggregate(&[eval.score])?, eval))
}
