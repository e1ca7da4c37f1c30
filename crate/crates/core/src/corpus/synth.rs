//! Planted-lexicon corpora with a simulated annotation ensemble.
//!
//! Texts are random filler tokens. An instance is truly offensive iff it
//! contains at least one lexicon token. Each of `ensemble_size` scorers
//! reports the true label plus clipped Gaussian noise, and the instance's
//! soft label is the mean and population standard deviation of those
//! scores. Optional decoy tokens produce non-offensive instances on which the
//! scorers disagree around `decoy_mean`, the synthetic counterpart of an
//! ambiguous tweet.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cctk::cctk_label;
use super::{CanonicalLabel, CorpusError, RawInstance, SoftLabel, Source};
use crate::codec::{whitespace_tokens, CharSpanSet};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Total distinct tokens: lexicon + decoys + fillers.
    pub vocab_size: usize,
    pub lexicon: Vec<String>,
    pub n_instances: usize,
    pub ensemble_size: usize,
    /// Standard deviation of each scorer's Gaussian noise.
    pub noise: f64,
    pub source: Source,
    pub offensive_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Upper bound on lexicon tokens planted in an offensive text.
    pub max_planted: usize,
    pub filler_prefix: String,
    pub id_prefix: String,
    pub decoys: Vec<String>,
    /// Probability that a non-offensive text carries one decoy token.
    pub decoy_rate: f64,
    pub decoy_mean: f64,
    pub decoy_noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            vocab_size: 50,
            lexicon: (0..5).map(|i| format!("kw{i}")).collect(),
            n_instances: 1000,
            ensemble_size: 4,
            noise: 0.05,
            source: Source::SolidLike,
            offensive_rate: 0.5,
            min_len: 4,
            max_len: 10,
            max_planted: 2,
            filler_prefix: "w".into(),
            id_prefix: "syn".into(),
            decoys: Vec::new(),
            decoy_rate: 0.0,
            decoy_mean: 0.6,
            decoy_noise: 0.25,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let err = |m: String| Err(CorpusError::Spec(m));
        let special = self.lexicon.len() + self.decoys.len();
        if special >= self.vocab_size {
            return err(format!(
                "lexicon ({}) and decoys ({}) must leave room for filler tokens in a vocabulary of {}",
                self.lexicon.len(),
                self.decoys.len(),
                self.vocab_size
            ));
        }
        if self.lexicon.is_empty() {
            return err("lexicon is empty".into());
        }
        let mut seen = BTreeSet::new();
        for tok in self.lexicon.iter().chain(&self.decoys) {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return err(format!("token `{tok}` is empty or contains whitespace"));
            }
            if tok.starts_with(&self.filler_prefix) && tok[self.filler_prefix.len()..].parse::<usize>().is_ok() {
                return err(format!("token `{tok}` collides with filler naming `{}<n>`", self.filler_prefix));
            }
            if !seen.insert(tok) {
                return err(format!("token `{tok}` listed twice"));
            }
        }
        if self.ensemble_size == 0 {
            return err("ensemble_size must be at least 1".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len || self.max_planted == 0 || self.max_planted > self.min_len {
            return err(format!("need 1 <= max_planted <= min_len <= max_len, got {} / {} / {}", self.max_planted, self.min_len, self.max_len));
        }
        for (name, p) in [("offensive_rate", self.offensive_rate), ("decoy_rate", self.decoy_rate), ("decoy_mean", self.decoy_mean)] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} {p} outside [0, 1]"));
            }
        }
        if !(self.noise >= 0.0 && self.decoy_noise >= 0.0) {
            return err("noise must be non-negative".into());
        }
        if self.decoy_rate > 0.0 && self.decoys.is_empty() {
            return err("decoy_rate > 0 without decoy tokens".into());
        }
        Ok(())
    }

    pub fn fillers(&self) -> Vec<String> {
        let n = self.vocab_size - self.lexicon.len() - self.decoys.len();
        (0..n).map(|i| format!("{}{i}", self.filler_prefix)).collect()
    }

    /// Every token the generator can emit.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v = self.lexicon.clone();
        v.extend(self.decoys.iter().cloned());
        v.extend(self.fillers());
        v
    }
}

/// Character ranges of the whitespace tokens of `text` that belong to `lexicon`.
pub fn lexicon_spans<S: AsRef<str>>(text: &str, lexicon: &[S]) -> CharSpanSet {
    let mut spans = CharSpanSet::new();
    for tok in whitespace_tokens(text) {
        if lexicon.iter().any(|l| l.as_ref() == tok.text) {
            spans.insert_range(tok.start, tok.end);
        }
    }
    spans
}

fn population_stats(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    (mean.clamp(0.0, 1.0), var.sqrt())
}

pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<Vec<RawInstance>, CorpusError> {
    spec.validate()?;
    let fillers = spec.fillers();
    let mut rng = rng::stream(seed, "synth");
    let mut out = Vec::with_capacity(spec.n_instances);
    for i in 0..spec.n_instances {
        let offensive = rng.random::<f64>() < spec.offensive_rate;
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let mut tokens: Vec<&str> = (0..len).map(|_| fillers[rng.random_range(0..fillers.len())].as_str()).collect();
        let mut decoy = false;
        if offensive {
            let k = rng.random_range(1..=spec.max_planted);
            for pos in index::sample(&mut rng, len, k) {
                tokens[pos] = &spec.lexicon[rng.random_range(0..spec.lexicon.len())];
            }
        } else if spec.decoy_rate > 0.0 && rng.random::<f64>() < spec.decoy_rate {
            decoy = true;
            tokens[rng.random_range(0..len)] = &spec.decoys[rng.random_range(0..spec.decoys.len())];
        }
        let (center, sd) = if decoy { (spec.decoy_mean, spec.decoy_noise) } else { (f64::from(u8::from(offensive)), spec.noise) };
        let scores: Vec<f64> = if sd == 0.0 {
            vec![center; spec.ensemble_size]
        } else {
            let normal = Normal::new(center, sd).map_err(|e| CorpusError::Spec(e.to_string()))?;
            (0..spec.ensemble_size).map(|_| normal.sample(&mut rng).clamp(0.0, 1.0)).collect()
        };
        let (mean, std) = population_stats(&scores);
        let text = tokens.join(" ");
        let spans = lexicon_spans(&text, &spec.lexicon);
        let id = format!("{}{i}", spec.id_prefix);
        let soft = SoftLabel::new(mean, std)?;
        let inst = match spec.source {
            Source::SolidLike => RawInstance::soft(id, text, spec.source, soft),
            Source::CctkLike => RawInstance::hard(id, text, spec.source, cctk_label(mean)),
            Source::Task => {
                let label = if mean > super::curate::OFFENSIVE_MEAN { CanonicalLabel::OFF } else { CanonicalLabel::NOT_OFF };
                RawInstance::hard(id, text, spec.source, label)
            }
        };
        out.push(inst.with_spans(spans));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::filter_confident;

    #[test]
    fn noiseless_ensemble_is_exact() {
        let spec = SynthSpec { noise: 0.0, n_instances: 300, ..SynthSpec::default() };
        let rows = synth_corpus(&spec, 3).unwrap();
        for r in &rows {
            let soft = r.soft_label.unwrap();
            assert_eq!(soft.std, 0.0);
            assert!(soft.mean == 0.0 || soft.mean == 1.0);
            assert_eq!(soft.mean == 1.0, !r.token_spans.as_ref().unwrap().is_empty());
        }
        assert_eq!(filter_confident(rows.clone(), 0.0).unwrap().len(), rows.len());
    }

    #[test]
    fn looser_threshold_keeps_strictly_more() {
        let spec = SynthSpec { noise: 0.1, n_instances: 1000, ..SynthSpec::default() };
        let rows = synth_corpus(&spec, 11).unwrap();
        let by_count = |t: f64| rows.iter().filter(|r| r.soft_label.unwrap().std <= t).count();
        let tight = filter_confident(rows.clone(), 0.05).unwrap().len();
        let loose = filter_confident(rows.clone(), 0.2).unwrap().len();
        assert_eq!((tight, loose), (by_count(0.05), by_count(0.2)));
        assert!(tight < loose, "{tight} vs {loose}");
    }

    #[test]
    fn planted_spans_by_hand() {
        let spans = lexicon_spans("aa bb kw1 cc", &["kw1"]);
        assert_eq!(spans.iter().collect::<Vec<_>>(), [6, 7, 8]);
    }

    #[test]
    fn lexicon_larger_than_vocabulary_is_rejected() {
        let spec = SynthSpec { vocab_size: 3, ..SynthSpec::default() };
        assert!(matches!(synth_corpus(&spec, 0), Err(CorpusError::Spec(_))));
    }

    #[test]
    fn generation_is_seeded() {
        let spec = SynthSpec { n_instances: 50, ..SynthSpec::default() };
        assert_eq!(synth_corpus(&spec, 9).unwrap(), synth_corpus(&spec, 9).unwrap());
        assert_ne!(synth_corpus(&spec, 9).unwrap(), synth_corpus(&spec, 10).unwrap());
    }

    #[test]
    fn vocabulary_has_requested_size_and_covers_texts() {
        let spec = SynthSpec { decoys: vec!["dz0".into()], decoy_rate: 0.3, ..SynthSpec::default() };
        let vocab = spec.vocabulary();
        assert_eq!(vocab.len(), spec.vocab_size);
        for r in synth_corpus(&spec, 1).unwrap() {
            assert!(r.text.split(' ').all(|t| vocab.iter().any(|v| v == t)));
            for i in r.token_spans.as_ref().unwrap().iter() {
                assert!(i < r.text.chars().count());
            }
        }
    }

    #[test]
    fn decoys_are_ambiguous_and_not_offensive() {
        let spec = SynthSpec {
            n_instances: 400,
            offensive_rate: 0.0,
            decoys: vec!["dz0".into()],
            decoy_rate: 1.0,
            ..SynthSpec::default()
        };
        let rows = synth_corpus(&spec, 5).unwrap();
        assert!(rows.iter().all(|r| r.token_spans.as_ref().unwrap().is_empty()));
        let mean_std: f64 = rows.iter().map(|r| r.soft_label.unwrap().std).sum::<f64>() / rows.len() as f64;
        assert!(mean_std > 0.1, "{mean_std}");
    }

    #[test]
    fn cctk_like_rows_carry_hard_labels() {
        let spec = SynthSpec { source: Source::CctkLike, noise: 0.0, n_instances: 20, ..SynthSpec::default() };
        for r in synth_corpus(&spec, 2).unwrap() {
            let label = r.hard_label.unwrap();
            assert!(r.soft_label.is_none());
            assert_eq!(label.is_positive(), !r.token_spans.as_ref().unwrap().is_empty());
        }
    }
}
