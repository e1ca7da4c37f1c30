//! Corpus ingestion and curation.

mod canonical;
mod cctk;
mod curate;
mod instance;
mod label;
mod labeled;
pub mod scheme;
mod solid;
mod stats;
mod synth;

use std::path::Path;

use thiserror::Error;

pub use canonical::{load_canonical, write_canonical, write_canonical_to, CanonicalReader, CanonicalRecord};
pub use cctk::{cctk_label, load_cctk, CctkReader, CCTK_COLUMNS, CCTK_TOXIC_AT};
pub use curate::{
    binarize, eval_size, filter_confident, is_confident, merge_with_prefixes, scheme_of_prefix, split_train_eval,
    training_label, CorpusSource, CuratedDataset, Provenance, OFFENSIVE_MEAN,
};
pub use instance::{RawInstance, SoftLabel, Source};
pub use label::{CanonicalLabel, LabelValue, Scheme};
pub use labeled::{load_labeled, load_tsd, read_labeled, read_tsd, LabeledLayout};
pub use scheme::{map_scheme, SchemeMapping, SchemeRegistry, PREFIX_SEPARATOR, REGISTERED_PREFIXES};
pub use solid::{count_confident, load_solid, write_solid, SolidReader, SOLID_COLUMNS};
pub use stats::{stats, DatasetStats};
pub use synth::{lexicon_spans, synth_corpus, SynthSpec};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("{path}:{line}: {message}")]
    Row { path: String, line: u64, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("instance `{id}` has no soft label")]
    MissingSoftLabel { id: String },
    #[error("label `{label}` is not mapped for {dataset}; known labels: {known}")]
    UnmappedLabel { label: String, dataset: String, known: String },
    #[error("no mapping registered for dataset `{dataset}`; known: {known}")]
    UnknownDataset { dataset: String, known: String },
    #[error("label {label} is not admitted by scheme {scheme}")]
    SchemeMismatch { label: LabelValue, scheme: Scheme },
    #[error("invalid synthetic corpus spec: {0}")]
    Spec(String),
    #[error("split fraction {0} outside (0, 1)")]
    Fraction(f64),
    #[error("{0}")]
    Parse(String),
}

impl CorpusError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn row(path: &str, line: u64, message: impl Into<String>) -> Self {
        Self::Row { path: path.to_string(), line, message: message.into() }
    }

    pub(crate) fn csv(path: &str, err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line());
        match (line, err.into_kind()) {
            (_, csv::ErrorKind::Io(e)) => Self::io(path, e),
            (Some(line), kind) => Self::row(path, line, format!("{kind:?}")),
            (None, kind) => Self::Parse(format!("{path}: {kind:?}")),
        }
    }
}
