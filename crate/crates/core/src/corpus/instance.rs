use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CanonicalLabel, CorpusError};
use crate::codec::CharSpanSet;

/// Where a raw instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "SOLID_LIKE")]
    SolidLike,
    #[serde(rename = "CCTK_LIKE")]
    CctkLike,
    #[serde(rename = "TASK")]
    Task,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::SolidLike => "SOLID_LIKE",
            Source::CctkLike => "CCTK_LIKE",
            Source::Task => "TASK",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SOLID_LIKE" => Ok(Source::SolidLike),
            "CCTK_LIKE" => Ok(Source::CctkLike),
            "TASK" => Ok(Source::Task),
            other => Err(CorpusError::Parse(format!("unknown source `{other}`"))),
        }
    }
}

/// Ensemble annotation: mean and standard deviation of the scorers' outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    pub mean: f64,
    pub std: f64,
}

impl SoftLabel {
    pub fn new(mean: f64, std: f64) -> Result<Self, CorpusError> {
        if !(0.0..=1.0).contains(&mean) {
            return Err(CorpusError::Parse(format!("mean {mean} outside [0, 1]")));
        }
        if !(std >= 0.0) || !std.is_finite() {
            return Err(CorpusError::Parse(format!("std {std} must be finite and non-negative")));
        }
        Ok(Self { mean, std })
    }
}

/// One corpus row before curation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInstance {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub soft_label: Option<SoftLabel>,
    pub hard_label: Option<CanonicalLabel>,
    pub token_spans: Option<CharSpanSet>,
}

impl RawInstance {
    pub fn soft(id: impl Into<String>, text: impl Into<String>, source: Source, label: SoftLabel) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            source,
            soft_label: Some(label),
            hard_label: None,
            token_spans: None,
        }
    }

    pub fn hard(id: impl Into<String>, text: impl Into<String>, source: Source, label: CanonicalLabel) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            source,
            soft_label: None,
            hard_label: Some(label),
            token_spans: None,
        }
    }

    pub fn with_spans(mut self, spans: CharSpanSet) -> Self {
        self.token_spans = Some(spans);
        self
    }

    /// Exactly one of the soft and hard label is present.
    pub fn is_trainable(&self) -> bool {
        self.soft_label.is_some() != self.hard_label.is_some()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if let Some(soft) = self.soft_label {
            SoftLabel::new(soft.mean, soft.std)?;
        }
        if let Some(spans) = &self.token_spans {
            spans.check_within(self.text.chars().count()).map_err(|e| CorpusError::Parse(format!("{}: {e}", self.id)))?;
        }
        Ok(())
    }
}
