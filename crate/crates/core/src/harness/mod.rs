//! Experimental harness: the threshold x corpus pretraining grid, per-task
//! fine-tuning and scoring, zero-shot evaluation and result tables.
//!
//! A grid row is one pretraining configuration. Every row is pretrained
//! once; each task is then fine-tuned from that checkpoint once per seed and
//! the scores are aggregated into a cell. Rows and runs execute on a rayon
//! pool whose size is capped by `LAB_WORKERS`; results are reduced in
//! spec order, so reports do not depend on completion order.

mod eval;
mod grid;
mod report;
mod spec;
mod world;

use thiserror::Error;

use crate::codec::CodecError;
use crate::corpus::CorpusError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::trainer::TrainError;

pub use eval::{evaluate, majority_baseline, task_scheme, zero_shot, TaskEval, ZERO_SHOT_PREFIXES};
pub use grid::{curate_row, curate_task, run_grid, run_grid_with_workers, GridCell, GridCorpora, GridReport, GridRow, TaskData};
pub use report::{format_cell, parse_csv, released_row, RELEASE_RULE, render_report, render_table, ReleasedRow, ReportFormat, ReportRow, ReportTable};
pub use spec::{Combo, DataSpec, GridSpec, TaskFiles};
pub use world::{build_world, SynthTask, WorldSpec};

/// Environment variable capping the number of concurrent grid workers.
pub const WORKERS_ENV: &str = "LAB_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid grid specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("zero-shot needs a test set prefixed with one of {ZERO_SHOT_PREFIXES:?}, got `{0}`")]
    ZeroShotPrefix(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Worker count from `LAB_WORKERS`, else the available parallelism.
pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
