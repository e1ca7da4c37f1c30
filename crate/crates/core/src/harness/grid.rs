use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::report::{ReportRow, ReportTable};
use super::spec::{Combo, DataSpec, GridSpec, TaskFiles};
use super::world::build_world;
use super::{evaluate, workers, HarnessError};
use crate::codec::{encode_token, TaskKind};
use crate::corpus::{
    filter_confident, load_canonical, load_cctk, load_solid, merge_with_prefixes, training_label, CorpusSource, CuratedDataset,
    Provenance, RawInstance, Scheme, SchemeMapping,
};
use crate::metrics::{aggregate, ScoreSummary};
use crate::trainer::{finetune, pretrain, Checkpoint, RunRecord};

/// Train and test parts of one downstream task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub name: String,
    pub kind: TaskKind,
    pub train: CuratedDataset,
    pub test: CuratedDataset,
}

/// Everything a grid reads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridCorpora {
    pub solid: Option<Vec<RawInstance>>,
    pub cctk: Option<Vec<RawInstance>>,
    pub tasks: Vec<TaskData>,
}

/// Curates canonical task rows under `prefix`: sentence rows keep the
/// scheme of their first label, token rows must carry gold spans.
pub fn curate_task(name: &str, prefix: &str, kind: TaskKind, rows: Vec<RawInstance>) -> Result<CuratedDataset, HarnessError> {
    match kind {
        TaskKind::Sentence => {
            let scheme = rows.first().map(training_label).transpose()?.map_or(Scheme::OlidA, |l| l.scheme());
            let mut mapping = SchemeMapping::identity(name, scheme);
            mapping.prefix = prefix.to_string();
            Ok(merge_with_prefixes(vec![CorpusSource { name: name.to_string(), instances: rows, mapping, std_threshold: None }])?)
        }
        TaskKind::Token => {
            let mut examples = Vec::with_capacity(rows.len());
            for r in rows {
                let spans = r.token_spans.clone().ok_or_else(|| HarnessError::Spec(format!("{name}: `{}` has no spans", r.id)))?;
                let mut ex = encode_token(prefix, &r.text, &spans)?;
                ex.id = format!("{name}/{}", r.id);
                ex.source = name.to_string();
                examples.push(ex);
            }
            Ok(CuratedDataset::from_examples(examples, &Default::default()))
        }
    }
}

fn load_task(files: &TaskFiles) -> Result<TaskData, HarnessError> {
    let prefix = files.prefix.clone().unwrap_or_else(|| files.name.clone());
    let curate = |path| curate_task(&files.name, &prefix, files.kind, load_canonical(path)?);
    Ok(TaskData { name: files.name.clone(), kind: files.kind, train: curate(&files.train)?, test: curate(&files.test)? })
}

impl GridCorpora {
    pub fn load(data: &DataSpec) -> Result<Self, HarnessError> {
        match data {
            DataSpec::Synthetic { seed, world } => build_world(world, *seed),
            DataSpec::Files { solid, cctk, tasks } => Ok(Self {
                solid: solid.as_ref().map(load_solid).transpose()?,
                cctk: cctk.as_ref().map(load_cctk).transpose()?,
                tasks: tasks.iter().map(load_task).collect::<Result<_, _>>()?,
            }),
        }
    }

    pub fn task(&self, name: &str) -> Option<&TaskData> {
        self.tasks.iter().find(|t| t.name == name)
    }
}

/// Pretraining data of one grid row: SOLID filtered at `threshold` under
/// the `OLID_A` prefix, CCTK in full under the `CCTK` prefix.
pub fn curate_row(corpora: &GridCorpora, combo: Combo, threshold: Option<f64>) -> Result<CuratedDataset, HarnessError> {
    let mut sources = Vec::new();
    if combo.uses_solid() {
        let solid = corpora.solid.as_ref().ok_or_else(|| HarnessError::Spec(format!("{combo} needs a SOLID corpus")))?;
        let t = threshold.ok_or_else(|| HarnessError::Spec(format!("{combo} needs a threshold")))?;
        sources.push(CorpusSource {
            name: "SOLID".into(),
            instances: filter_confident(solid.clone(), t)?,
            mapping: SchemeMapping::identity("SOLID", Scheme::OlidA),
            std_threshold: Some(t),
        });
    }
    if combo.uses_cctk() {
        let cctk = corpora.cctk.as_ref().ok_or_else(|| HarnessError::Spec(format!("{combo} needs a CCTK corpus")))?;
        sources.push(CorpusSource {
            name: "CCTK".into(),
            instances: cctk.clone(),
            mapping: SchemeMapping::identity("CCTK", Scheme::Cctk),
            std_threshold: None,
        });
    }
    Ok(merge_with_prefixes(sources)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub combo: Combo,
    pub threshold: Option<f64>,
    /// Pretraining instances; the sum of the provenance counts.
    pub instances: usize,
    pub provenance: Vec<Provenance>,
    pub pretrain_steps: u64,
    pub pretrain_eval_loss: f64,
    /// Set when curation or pretraining failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub row: usize,
    pub task: String,
    /// `None` marks a missing cell.
    pub summary: Option<ScoreSummary>,
    pub mean_invalid_rate: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub tasks: Vec<String>,
    pub rows: Vec<GridRow>,
    /// Row-major over `rows` x `tasks`.
    pub cells: Vec<GridCell>,
    pub runs: Vec<RunRecord>,
}

impl GridReport {
    pub fn cell(&self, row: usize, task: &str) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.row == row && c.task == task)
    }

    pub fn row_index(&self, combo: Combo, threshold: Option<f64>) -> Option<usize> {
        self.rows.iter().position(|r| r.combo == combo && r.threshold == threshold)
    }

    pub fn missing(&self) -> Vec<&GridCell> {
        self.cells.iter().filter(|c| c.summary.is_none()).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.missing().is_empty()
    }

    pub fn to_table(&self) -> ReportTable {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| ReportRow {
                label: r.combo.label().to_string(),
                threshold: r.threshold,
                instances: r.instances,
                cells: self
                    .tasks
                    .iter()
                    .map(|t| self.cell(i, t).and_then(|c| c.summary.as_ref()).map(|s| (s.mean, s.std)))
                    .collect(),
            })
            .collect();
        ReportTable { tasks: self.tasks.clone(), rows }
    }
}

fn run_once(
    spec: &GridSpec,
    row: &GridRow,
    start: &Checkpoint,
    task: &TaskData,
    seed: u64,
) -> Result<RunRecord, HarnessError> {
    let clock = Instant::now();
    let outcome = finetune(start, &task.train, &spec.finetune.clone().with_seed(seed))?;
    let eval = evaluate(&outcome.checkpoint.state, &task.test)?;
    Ok(RunRecord {
        combo: row.combo.name().to_string(),
        threshold: row.threshold,
        task: task.name.clone(),
        seed,
        instances: row.instances,
        eval_losses: outcome.eval_losses(),
        score: eval.score,
        invalid_rate: eval.invalid_rate,
        wall_clock_secs: clock.elapsed().as_secs_f64(),
    })
}

fn run_row(
    spec: &GridSpec,
    corpora: &GridCorpora,
    index: usize,
    combo: Combo,
    threshold: Option<f64>,
    tasks: &[String],
) -> (GridRow, Vec<GridCell>, Vec<RunRecord>) {
    let mut row = GridRow {
        combo,
        threshold,
        instances: 0,
        provenance: Vec::new(),
        pretrain_steps: 0,
        pretrain_eval_loss: f64::NAN,
        error: None,
    };
    let missing = |task: &str, err: String| GridCell {
        row: index,
        task: task.to_string(),
        summary: None,
        mean_invalid_rate: f64::NAN,
        error: Some(err),
    };
    let pretrained = curate_row(corpora, combo, threshold).and_then(|data| {
        row.instances = data.len();
        row.provenance = data.provenance.clone();
        info!("row {index} ({combo}, {threshold:?}): pretraining on {} instances", data.len());
        Ok(pretrain(&data, &spec.model, &spec.pretrain)?)
    });
    let start = match pretrained {
        Ok(outcome) => {
            row.pretrain_steps = outcome.steps;
            row.pretrain_eval_loss = outcome.checkpoint.best_eval_loss;
            outcome.checkpoint
        }
        Err(e) => {
            warn!("row {index} ({combo}, {threshold:?}) failed: {e}");
            row.error = Some(e.to_string());
            let cells = tasks.iter().map(|t| missing(t, format!("pretraining failed: {e}"))).collect();
            return (row, cells, Vec::new());
        }
    };

    let jobs: Vec<(usize, u64)> = (0..tasks.len()).flat_map(|t| spec.seeds.iter().map(move |&s| (t, s))).collect();
    let results: Vec<Result<RunRecord, HarnessError>> = jobs
        .par_iter()
        .map(|&(t, seed)| {
            let task = corpora.task(&tasks[t]).ok_or_else(|| HarnessError::Spec(format!("no data for task `{}`", tasks[t])))?;
            run_once(spec, &row, &start, task, seed)
        })
        .collect();

    let mut cells = Vec::with_capacity(tasks.len());
    let mut records = Vec::new();
    for (t, name) in tasks.iter().enumerate() {
        let mut scores = Vec::new();
        let mut invalid = 0.0;
        let mut errors = Vec::new();
        for ((_, seed), r) in jobs.iter().zip(&results).filter(|((jt, _), _)| *jt == t) {
            match r {
                Ok(run) => {
                    scores.push(run.score);
                    invalid += run.invalid_rate;
                    records.push(run.clone());
                }
                Err(e) => errors.push(format!("seed {seed}: {e}")),
            }
        }
        if errors.is_empty() {
            let summary = aggregate(&scores).ok();
            let n = scores.len() as f64;
            cells.push(GridCell { row: index, task: name.clone(), summary, mean_invalid_rate: invalid / n, error: None });
        } else {
            warn!("row {index} task {name}: {} failed runs", errors.len());
            cells.push(missing(name, errors.join("; ")));
        }
    }
    (row, cells, records)
}

pub fn run_grid(spec: &GridSpec, corpora: &GridCorpora) -> Result<GridReport, HarnessError> {
    run_grid_with_workers(spec, corpora, workers())
}

/// Runs every row of the grid on a pool of `n_workers` threads. Failures
/// become missing cells; only an invalid spec is an error.
pub fn run_grid_with_workers(spec: &GridSpec, corpora: &GridCorpora, n_workers: usize) -> Result<GridReport, HarnessError> {
    spec.validate()?;
    let tasks: Vec<String> =
        if spec.tasks.is_empty() { corpora.tasks.iter().map(|t| t.name.clone()).collect() } else { spec.tasks.clone() };
    for (i, t) in tasks.iter().enumerate() {
        if tasks[..i].contains(t) {
            return Err(HarnessError::Spec(format!("task `{t}` listed twice")));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n_workers.max(1))
        .build()
        .map_err(|e| HarnessError::Spec(format!("worker pool: {e}")))?;
    let rows = spec.rows();
    let results: Vec<_> = pool.install(|| {
        rows.par_iter().enumerate().map(|(i, &(combo, t))| run_row(spec, corpora, i, combo, t, &tasks)).collect()
    });
    let mut report = GridReport { tasks, rows: Vec::new(), cells: Vec::new(), runs: Vec::new() };
    for (row, cells, runs) in results {
        report.rows.push(row);
        report.cells.extend(cells);
        report.runs.extend(runs);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SoftLabel, Source};

    fn soft(id: usize, std: f64) -> RawInstance {
        RawInstance::soft(id.to_string(), format!("w{id}"), Source::SolidLike, SoftLabel::new(0.9, std).unwrap())
    }

    #[test]
    fn row_counts_match_provenance() {
        let solid: Vec<_> = (0..10).map(|i| soft(i, i as f64 / 40.0)).collect();
        let cctk: Vec<_> = (0..3)
            .map(|i| RawInstance::hard(format!("c{i}"), "x y", Source::CctkLike, crate::corpus::CanonicalLabel::TOX))
            .collect();
        let corpora = GridCorpora { solid: Some(solid), cctk: Some(cctk), tasks: Vec::new() };
        let only = curate_row(&corpora, Combo::SolidOnly, Some(0.1)).unwrap();
        assert_eq!(only.len(), 5);
        let both = curate_row(&corpora, Combo::SolidPlusCctk, Some(0.1)).unwrap();
        assert_eq!(both.len(), 8);
        assert_eq!(both.provenance.iter().map(|p| p.count).sum::<usize>(), both.len());
        assert_eq!(curate_row(&corpora, Combo::CctkOnly, None).unwrap().len(), 3);
        assert!(curate_row(&GridCorpora::default(), Combo::CctkOnly, None).is_err());
    }

    #[test]
    fn missing_data_gives_missing_cells_not_errors() {
        let spec = GridSpec {
            thresholds: vec![0.1],
            combos: vec![Combo::SolidOnly, Combo::CctkOnly],
            tasks: vec!["AHSD".into()],
            n_runs: 1,
            seeds: vec![0],
            ..GridSpec::default()
        };
        let report = run_grid_with_workers(&spec, &GridCorpora::default(), 1).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.missing().len(), 2);
        assert!(report.rows.iter().all(|r| r.error.is_some()));
    }
}
