//! Confidence filtering, binarisation, prefix merging and train/eval splits.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::scheme::SchemeMapping;
use super::{CanonicalLabel, CorpusError, RawInstance, Scheme};
use crate::codec::{self, CuratedExample};
use crate::rng;

/// Mean above which a SOLID instance is labelled offensive (strict).
pub const OFFENSIVE_MEAN: f64 = 0.5;

/// Keep instances whose ensemble STD is at most `std_threshold`, in input order.
pub fn filter_confident(instances: Vec<RawInstance>, std_threshold: f64) -> Result<Vec<RawInstance>, CorpusError> {
    let mut kept = Vec::with_capacity(instances.len());
    for inst in instances {
        if is_confident(&inst, std_threshold)? {
            kept.push(inst);
        }
    }
    Ok(kept)
}

pub fn is_confident(inst: &RawInstance, std_threshold: f64) -> Result<bool, CorpusError> {
    let soft = inst
        .soft_label
        .ok_or_else(|| CorpusError::MissingSoftLabel { id: inst.id.clone() })?;
    Ok(soft.std <= std_threshold)
}

/// OLID-A label of a semi-supervised instance: OFF iff mean > 0.5.
pub fn binarize(inst: &RawInstance) -> Result<CanonicalLabel, CorpusError> {
    let soft = inst
        .soft_label
        .ok_or_else(|| CorpusError::MissingSoftLabel { id: inst.id.clone() })?;
    Ok(if soft.mean > OFFENSIVE_MEAN { CanonicalLabel::OFF } else { CanonicalLabel::NOT_OFF })
}

/// Label used for training: the hard label if present, else the binarised soft label.
pub fn training_label(inst: &RawInstance) -> Result<CanonicalLabel, CorpusError> {
    match (inst.hard_label, inst.soft_label) {
        (Some(label), None) => Ok(label),
        (None, Some(_)) => binarize(inst),
        (Some(_), Some(_)) => Err(CorpusError::Parse(format!("{}: both soft and hard labels present", inst.id))),
        (None, None) => Err(CorpusError::Parse(format!("{}: no label", inst.id))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub std_threshold: Option<f64>,
    pub count: usize,
}

/// Prefix-tagged examples ready for seq2seq training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CuratedDataset {
    pub examples: Vec<CuratedExample>,
    pub provenance: Vec<Provenance>,
}

impl CuratedDataset {
    pub fn new(examples: Vec<CuratedExample>, provenance: Vec<Provenance>) -> Self {
        Self { examples, provenance }
    }

    /// Dataset whose provenance is recomputed from its examples' sources.
    pub fn from_examples(examples: Vec<CuratedExample>, thresholds: &BTreeMap<String, Option<f64>>) -> Self {
        let mut order: Vec<String> = Vec::new();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for ex in &examples {
            let c = counts.entry(ex.source.as_str()).or_insert(0);
            if *c == 0 {
                order.push(ex.source.clone());
            }
            *c += 1;
        }
        let provenance = order
            .iter()
            .map(|s| Provenance {
                source: s.clone(),
                std_threshold: thresholds.get(s).copied().flatten(),
                count: counts[s.as_str()],
            })
            .collect();
        Self { examples, provenance }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Prefixes in first-seen order.
    pub fn prefixes(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for ex in &self.examples {
            if !seen.contains(&ex.prefix.as_str()) {
                seen.push(&ex.prefix);
            }
        }
        seen
    }

    fn thresholds(&self) -> BTreeMap<String, Option<f64>> {
        self.provenance.iter().map(|p| (p.source.clone(), p.std_threshold)).collect()
    }
}

/// One labelled corpus entering a merge.
#[derive(Debug, Clone)]
pub struct CorpusSource {
    pub name: String,
    pub instances: Vec<RawInstance>,
    pub mapping: SchemeMapping,
    pub std_threshold: Option<f64>,
}

/// Concatenate sentence-level corpora, each tagged with its mapping's prefix.
pub fn merge_with_prefixes(sources: Vec<CorpusSource>) -> Result<CuratedDataset, CorpusError> {
    let mut examples = Vec::with_capacity(sources.iter().map(|s| s.instances.len()).sum());
    let mut provenance = Vec::with_capacity(sources.len());
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for source in sources {
        source.mapping.validate()?;
        for inst in &source.instances {
            let label = training_label(inst)?;
            if label.scheme() != source.mapping.scheme {
                return Err(CorpusError::SchemeMismatch { label: label.value(), scheme: source.mapping.scheme });
            }
            if let Some(prev) = owner.insert(inst.id.clone(), source.name.clone()) {
                warn!("id `{}` appears in both `{prev}` and `{}`; ids are namespaced by source", inst.id, source.name);
            }
            let mut ex = codec::encode_sentence(&source.mapping.prefix, &inst.text, label)
                .map_err(|e| CorpusError::Parse(format!("{}: {e}", inst.id)))?;
            ex.id = format!("{}/{}", source.name, inst.id);
            ex.source = source.name.clone();
            examples.push(ex);
        }
        provenance.push(Provenance { source: source.name, std_threshold: source.std_threshold, count: source.instances.len() });
    }
    Ok(CuratedDataset { examples, provenance })
}

/// Number of eval rows for a split: `fraction * n` rounded to nearest.
pub fn eval_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Seeded shuffle, then the first `eval_size` shuffled rows form the eval part.
/// Both parts keep the input's relative order.
pub fn split_train_eval(dataset: &CuratedDataset, fraction: f64, seed: u64) -> Result<(CuratedDataset, CuratedDataset), CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::Fraction(fraction));
    }
    let n = dataset.len();
    if n == 0 {
        warn!("splitting an empty dataset");
        return Ok((CuratedDataset::default(), CuratedDataset::default()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let n_eval = eval_size(n, fraction);
    let mut is_eval = vec![false; n];
    for &i in &order[..n_eval] {
        is_eval[i] = true;
    }
    let (mut train, mut eval) = (Vec::with_capacity(n - n_eval), Vec::with_capacity(n_eval));
    for (ex, e) in dataset.examples.iter().zip(is_eval) {
        if e { eval.push(ex.clone()) } else { train.push(ex.clone()) }
    }
    let thresholds = dataset.thresholds();
    Ok((CuratedDataset::from_examples(train, &thresholds), CuratedDataset::from_examples(eval, &thresholds)))
}

/// Scheme implied by a sentence target, if any.
pub fn scheme_of_prefix(prefix: &str) -> Option<Scheme> {
    prefix.parse().ok()
}
