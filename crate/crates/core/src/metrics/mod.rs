//! Evaluation measures.
//!
//! Sentence tasks use macro F1 over a declared class set. Token tasks use
//! per-post F1 between predicted and gold character-offset sets, averaged
//! over posts. Repeated runs are summarised by mean and sample standard
//! deviation.

use std::fmt::Display;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CharSpanSet;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no label pairs to score")]
    Empty,
    #[error("gold and predicted lists differ in length ({gold} vs {pred})")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("label {0} is outside the declared class set")]
    UnknownLabel(String),
    #[error("cannot aggregate zero runs")]
    NoRuns,
}

/// Parallel gold and predicted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPairs<L> {
    gold: Vec<L>,
    pred: Vec<L>,
}

impl<L> LabelPairs<L> {
    pub fn new(gold: Vec<L>, pred: Vec<L>) -> Result<Self, MetricsError> {
        if gold.len() != pred.len() {
            return Err(MetricsError::LengthMismatch { gold: gold.len(), pred: pred.len() });
        }
        Ok(Self { gold, pred })
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn gold(&self) -> &[L] {
        &self.gold
    }

    pub fn pred(&self) -> &[L] {
        &self.pred
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 for each class of `class_set`, in order.
pub fn per_class_scores<L: PartialEq + Display>(pairs: &LabelPairs<L>, class_set: &[L]) -> Result<Vec<ClassScore>, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(bad) = pairs.gold.iter().chain(&pairs.pred).find(|l| !class_set.contains(l)) {
        return Err(MetricsError::UnknownLabel(bad.to_string()));
    }
    Ok(class_set
        .iter()
        .map(|class| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (g, p) in pairs.gold.iter().zip(&pairs.pred) {
                match (g == class, p == class) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            ClassScore { label: class.to_string(), precision, recall, f1: harmonic(precision, recall), support: tp + fn_ }
        })
        .collect())
}

/// Unweighted mean of per-class F1 over the declared `class_set`.
pub fn macro_f1<L: PartialEq + Display>(pairs: &LabelPairs<L>, class_set: &[L]) -> Result<f64, MetricsError> {
    let scores = per_class_scores(pairs, class_set)?;
    Ok(scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64)
}

/// How posts with empty gold and empty predicted sets are scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BothEmpty {
    /// Perfect agreement: the post scores 1.
    #[default]
    ScoreOne,
    /// The post is left out of the average.
    Exclude,
}

/// F1 between two index sets; both empty scores 1, exactly one empty scores 0.
pub fn span_f1(gold: &CharSpanSet, pred: &CharSpanSet) -> f64 {
    match (gold.is_empty(), pred.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => {
            let hit = gold.intersection_len(pred);
            harmonic(ratio(hit, pred.len()), ratio(hit, gold.len()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScore {
    pub score: f64,
    pub posts_scored: usize,
    pub both_empty: usize,
}

/// Mean per-post F1 of `(gold, predicted)` pairs. No scored posts gives 0.
pub fn char_offset_f1_with(pairs: &[(CharSpanSet, CharSpanSet)], mode: BothEmpty) -> SpanScore {
    let mut total = 0.0;
    let (mut scored, mut both_empty) = (0, 0);
    for (gold, pred) in pairs {
        if gold.is_empty() && pred.is_empty() {
            both_empty += 1;
            if mode == BothEmpty::Exclude {
                continue;
            }
        }
        total += span_f1(gold, pred);
        scored += 1;
    }
    SpanScore { score: if scored == 0 { 0.0 } else { total / scored as f64 }, posts_scored: scored, both_empty }
}

pub fn char_offset_f1(pairs: &[(CharSpanSet, CharSpanSet)]) -> f64 {
    char_offset_f1_with(pairs, BothEmpty::ScoreOne).score
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single run.
    pub std: f64,
    pub n_runs: usize,
    pub per_run: Vec<f64>,
}

pub fn aggregate(per_run: &[f64]) -> Result<ScoreSummary, MetricsError> {
    let n = per_run.len();
    if n == 0 {
        return Err(MetricsError::NoRuns);
    }
    let mean = per_run.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (per_run.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(ScoreSummary { mean, std, n_runs: n, per_run: per_run.to_vec() })
}
