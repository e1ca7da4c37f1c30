//! `lab`: command-line front end of the pipeline.
//!
//! Data files are canonical line-delimited records unless a verb says
//! otherwise. Verbs that score print one JSON line on stdout.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use t2t_lab::codec::{read_predictions, write_predictions, CharSpanSet, PredictionRecord};
use t2t_lab::corpus::{
    is_confident, load_canonical, synth_corpus, CanonicalReader, CanonicalRecord, CctkReader, CorpusError, SolidReader,
    SynthSpec,
};
use t2t_lab::harness::{
    curate_row, curate_task, evaluate, render_report, render_table, run_grid, task_scheme, zero_shot, Combo, GridCorpora,
    GridSpec, ReportFormat, ReportTable,
};
use t2t_lab::metrics::{char_offset_f1_with, macro_f1, per_class_scores, BothEmpty, LabelPairs};
use t2t_lab::model::{inspect, ModelConfig};
use t2t_lab::trainer::{
    finetune, pretrain, read_run_records, write_run_log, write_run_records, Checkpoint, Stage, TrainConfig, TrainOutcome,
};
use t2t_lab::{CuratedDataset, LabelValue, RawInstance, TaskKind};

#[derive(Parser)]
#[command(name = "lab", version, about = "Text-to-text offensive language identification at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a SOLID TSV, CCTK CSV or TSD file into canonical records.
    Ingest {
        #[arg(long, value_enum)]
        format: IngestFormat,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep the canonical rows whose ensemble std is at most `--std`.
    Filter {
        #[arg(long)]
        std: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus from a TOML generator spec.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain from scratch on SOLID (filtered at `--std`) and/or CCTK rows.
    Pretrain {
        #[arg(long)]
        solid: Option<PathBuf>,
        #[arg(long)]
        std: Option<f64>,
        #[arg(long)]
        cctk: Option<PathBuf>,
        /// Architecture TOML; the desk-scale default otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        /// Output checkpoint.
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Fine-tune a checkpoint on one task.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        config: TrainArgs,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy-decode a test set and score it.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        task: TaskArgs,
        /// Prediction dump to write.
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Checkpoint utilities.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Score a prediction dump against canonical gold rows.
    Score {
        #[arg(long, value_enum)]
        task: Kind,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Task name used when the dump was written.
        #[arg(long, default_value = "task")]
        name: String,
        #[arg(long)]
        prefix: Option<String>,
        /// Per-class precision/recall/F1 CSV (sentence tasks).
        #[arg(long)]
        per_class: Option<PathBuf>,
        /// Leave posts with empty gold and predicted spans out of the average.
        #[arg(long)]
        exclude_both_empty: bool,
    },
    /// Run a pretraining x fine-tuning grid and render its table.
    Grid {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        /// Run records; `<out>.runs.jsonl` by default.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// Score a pretrained checkpoint on an OLID_A or CCTK test set as is.
    Zeroshot {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Defaults to the scheme of the first gold label.
        #[arg(long)]
        prefix: Option<String>,
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Render a table from run-record files.
    Report {
        /// A run-record file or a directory of `*.jsonl` run records.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print the configuration, tensor shapes and parameter count.
    Inspect { ckpt: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum IngestFormat {
    Solid,
    Cctk,
    Canonical,
    Tsd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sentence,
    Token,
}

impl From<Kind> for TaskKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Sentence => TaskKind::Sentence,
            Kind::Token => TaskKind::Token,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training config TOML; stage defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run log (one JSON record per evaluation).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long, default_value = "task")]
    name: String,
    /// Input prefix; the task name otherwise.
    #[arg(long)]
    prefix: Option<String>,
    #[arg(long, value_enum, default_value = "sentence")]
    kind: Kind,
}

impl TaskArgs {
    fn load(&self, path: &Path) -> Result<CuratedDataset> {
        let prefix = self.prefix.as_deref().unwrap_or(&self.name);
        let rows = load_canonical(path)?;
        curate_task(&self.name, prefix, self.kind.into(), rows).with_context(|| format!("curating {}", path.display()))
    }
}

impl TrainArgs {
    fn config(&self, stage: Stage) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => TrainConfig::from_toml_str(&read(path)?).with_context(|| format!("config {}", path.display()))?,
            None => TrainConfig::defaults(stage),
        };
        if config.stage != stage {
            bail!("config stage {:?} does not match this verb ({stage:?})", config.stage);
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }

    fn write_log(&self, outcome: &TrainOutcome) -> Result<()> {
        if let Some(path) = &self.log {
            write_run_log(BufWriter::new(create(path)?), &outcome.log)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ScoreLine {
    score: f64,
    n: usize,
    invalid_rate: f64,
}

#[derive(Serialize)]
struct TrainLine {
    steps: u64,
    best_eval_loss: f64,
    stopped_early: bool,
    truncation_rate: f64,
    unknown_rate: f64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

/// Streams rows into canonical records, one line each.
fn write_stream(out: &Path, rows: impl Iterator<Item = Result<RawInstance, CorpusError>>) -> Result<usize> {
    let mut w = BufWriter::new(create(out)?);
    let mut n = 0;
    for row in rows {
        serde_json::to_writer(&mut w, &CanonicalRecord::from(&row?))?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

fn ingest(format: IngestFormat, input: &Path, out: &Path) -> Result<()> {
    let n = match format {
        IngestFormat::Solid => write_stream(out, SolidReader::open(input)?)?,
        IngestFormat::Cctk => write_stream(out, CctkReader::open(input)?)?,
        IngestFormat::Canonical => write_stream(out, CanonicalReader::open(input)?)?,
        IngestFormat::Tsd => write_stream(out, t2t_lab::corpus::load_tsd(input)?.into_iter().map(Ok))?,
    };
    info!("wrote {n} rows to {}", out.display());
    Ok(())
}

fn filter(std: f64, input: &Path, out: &Path) -> Result<()> {
    let mut seen = 0usize;
    let kept = CanonicalReader::open(input)?.filter_map(|row| {
        seen += 1;
        match row {
            Ok(r) => match is_confident(&r, std) {
                Ok(true) => Some(Ok(r)),
                Ok(false) => None,
                Err(e) => Some(Err(e)),
            },
            Err(e) => Some(Err(e)),
        }
    });
    let n = write_stream(out, kept)?;
    info!("kept {n} of {seen} rows at std <= {std}");
    Ok(())
}

fn synth(spec: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let spec: SynthSpec = match spec {
        Some(p) => toml::from_str(&read(p)?).with_context(|| format!("generator spec {}", p.display()))?,
        None => SynthSpec::default(),
    };
    let rows = synth_corpus(&spec, seed)?;
    write_stream(out, rows.into_iter().map(Ok))?;
    Ok(())
}

fn train_line(outcome: &TrainOutcome) -> TrainLine {
    TrainLine {
        steps: outcome.steps,
        best_eval_loss: outcome.checkpoint.best_eval_loss,
        stopped_early: outcome.stopped_early,
        truncation_rate: outcome.truncation_rate,
        unknown_rate: outcome.unknown_rate,
    }
}

fn run_pretrain(solid: Option<&Path>, std: Option<f64>, cctk: Option<&Path>, model: Option<&Path>, args: &TrainArgs, ckpt: &Path) -> Result<()> {
    let combo = match (solid, cctk) {
        (Some(_), Some(_)) => Combo::SolidPlusCctk,
        (Some(_), None) => Combo::SolidOnly,
        (None, Some(_)) => Combo::CctkOnly,
        (None, None) => bail!("pretraining needs --solid and/or --cctk"),
    };
    if solid.is_some() && std.is_none() {
        bail!("--solid needs --std");
    }
    let corpora = GridCorpora {
        solid: solid.map(load_canonical).transpose()?,
        cctk: cctk.map(load_canonical).transpose()?,
        tasks: Vec::new(),
    };
    let data = curate_row(&corpora, combo, std)?;
    let arch: ModelConfig = match model {
        Some(p) => toml::from_str(&read(p)?).with_context(|| format!("model config {}", p.display()))?,
        None => ModelConfig::toy(0),
    };
    let config = args.config(Stage::Pretrain)?;
    info!("pretraining {combo} on {} examples", data.len());
    let outcome = pretrain(&data, &arch, &config)?;
    outcome.checkpoint.save(ckpt)?;
    args.write_log(&outcome)?;
    print_json(&train_line(&outcome))
}

fn run_finetune(ckpt: &Path, train: &Path, task: &TaskArgs, args: &TrainArgs, out: &Path) -> Result<()> {
    let start = Checkpoint::load(ckpt)?;
    let data = task.load(train)?;
    let outcome = finetune(&start, &data, &args.config(Stage::Finetune)?)?;
    outcome.checkpoint.save(out)?;
    args.write_log(&outcome)?;
    print_json(&train_line(&outcome))
}

fn write_pred(path: Option<&Path>, records: &[PredictionRecord]) -> Result<()> {
    if let Some(p) = path {
        write_predictions(BufWriter::new(create(p)?), records)?;
    }
    Ok(())
}

fn run_eval(ckpt: &Path, test: &Path, task: &TaskArgs, pred: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt)?;
    let data = task.load(test)?;
    let eval = evaluate(&ckpt.state, &data)?;
    write_pred(pred, &eval.predictions)?;
    print_json(&ScoreLine { score: eval.score, n: data.len(), invalid_rate: eval.invalid_rate })
}

fn run_zeroshot(ckpt: &Path, test: &Path, prefix: Option<&str>, pred: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt)?;
    let rows = load_canonical(test)?;
    let prefix = match prefix {
        Some(p) => p.to_string(),
        None => {
            let first = rows.first().context("empty test set")?;
            t2t_lab::corpus::training_label(first)?.scheme().name().to_string()
        }
    };
    let data = curate_task("task", &prefix, TaskKind::Sentence, rows)?;
    let (summary, eval) = zero_shot(&ckpt, &data)?;
    write_pred(pred, &eval.predictions)?;
    print_json(&ScoreLine { score: summary.mean, n: data.len(), invalid_rate: eval.invalid_rate })
}

fn model_inspect(path: &Path) -> Result<()> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let s = inspect(BufReader::new(file))?;
    let c = &s.config;
    println!("format version {}", s.version);
    println!(
        "d_model {} heads {} encoder layers {} decoder layers {} d_ff {} max_src {} max_tgt {} dropout {}",
        c.d_model, c.n_heads, c.n_enc_layers, c.n_dec_layers, c.d_ff, c.max_src_len, c.max_tgt_len, c.dropout
    );
    println!("vocabulary {}", s.vocab_size);
    for t in &s.tensors {
        println!("{:<40} {:?}", t.name, t.shape);
    }
    println!("parameters {}", s.n_params);
    Ok(())
}

#[derive(Serialize)]
struct ClassRow<'a> {
    label: &'a str,
    precision: f64,
    recall: f64,
    f1: f64,
    support: usize,
}

fn score(kind: Kind, gold: &Path, pred: &Path, name: &str, prefix: Option<&str>, per_class: Option<&Path>, exclude: bool) -> Result<()> {
    let gold = curate_task(name, prefix.unwrap_or(name), kind.into(), load_canonical(gold)?)?;
    let file = File::open(pred).with_context(|| format!("opening {}", pred.display()))?;
    let preds = read_predictions(BufReader::new(file))?;
    let by_id: std::collections::HashMap<&str, &PredictionRecord> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let matched: Vec<&PredictionRecord> = gold
        .examples
        .iter()
        .map(|ex| by_id.get(ex.id.as_str()).copied().with_context(|| format!("no prediction for `{}`", ex.id)))
        .collect::<Result<_>>()?;
    let n = gold.len();
    let invalid_rate = matched.iter().filter(|p| !p.parse_ok).count() as f64 / n.max(1) as f64;
    let score = match kind {
        Kind::Sentence => {
            let scheme = task_scheme(&gold);
            let parse = |s: &str, id: &str| s.trim().parse::<LabelValue>().with_context(|| format!("`{id}`: label `{s}`"));
            let g = gold.examples.iter().map(|e| parse(&e.target_text, &e.id)).collect::<Result<Vec<_>>>()?;
            let p = matched.iter().map(|r| parse(r.label.as_deref().unwrap_or(""), &r.id)).collect::<Result<Vec<_>>>()?;
            let pairs = LabelPairs::new(g, p)?;
            if let Some(path) = per_class {
                let mut w = csv::Writer::from_writer(create(path)?);
                for c in per_class_scores(&pairs, &scheme.labels())? {
                    w.serialize(ClassRow { label: &c.label, precision: c.precision, recall: c.recall, f1: c.f1, support: c.support })?;
                }
                w.flush()?;
            }
            macro_f1(&pairs, &scheme.labels())?
        }
        Kind::Token => {
            if per_class.is_some() {
                bail!("--per-class applies to sentence tasks");
            }
            let pairs = gold
                .examples
                .iter()
                .zip(&matched)
                .map(|(e, r)| {
                    let p: CharSpanSet = r.spans.as_deref().unwrap_or("").parse().with_context(|| format!("`{}`: spans", r.id))?;
                    Ok((e.gold_spans.clone().unwrap_or_default(), p))
                })
                .collect::<Result<Vec<_>>>()?;
            char_offset_f1_with(&pairs, if exclude { BothEmpty::Exclude } else { BothEmpty::ScoreOne }).score
        }
    };
    print_json(&ScoreLine { score, n, invalid_rate })
}

/// Returns false iff some requested cell is missing.
fn grid(spec_path: &Path, out: &Path, format: ReportFormat, runs: Option<&Path>) -> Result<bool> {
    let spec = GridSpec::from_file(spec_path)?;
    let corpora = GridCorpora::load(&spec.data)?;
    let report = run_grid(&spec, &corpora)?;
    create(out)?.write_all(render_report(&report, format).as_bytes())?;
    let runs = runs.map_or_else(|| PathBuf::from(format!("{}.runs.jsonl", out.display())), Path::to_path_buf);
    write_run_records(BufWriter::new(create(&runs)?), &report.runs)?;
    for cell in report.missing() {
        let row = &report.rows[cell.row];
        eprintln!("missing: {} @ {:?} / {}: {}", row.combo, row.threshold, cell.task, cell.error.as_deref().unwrap_or("no result"));
    }
    Ok(report.is_complete())
}

fn record_files(input: &Path) -> Result<Vec<PathBuf>> {
    if !input.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

fn report(input: &Path, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    let mut records = Vec::new();
    for f in record_files(input)? {
        let reader = BufReader::new(File::open(&f).with_context(|| format!("opening {}", f.display()))?);
        records.extend(read_run_records(reader).with_context(|| format!("reading {}", f.display()))?);
    }
    if records.is_empty() {
        bail!("no run records under {}", input.display());
    }
    let text = render_table(&ReportTable::from_records(&records)?, format);
    match out {
        Some(p) => create(p)?.write_all(text.as_bytes())?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest { format, input, out } => ingest(format, &input, &out)?,
        Command::Filter { std, input, out } => filter(std, &input, &out)?,
        Command::Synth { spec, seed, out } => synth(spec.as_deref(), seed, &out)?,
        Command::Pretrain { solid, std, cctk, model, train, ckpt } => {
            run_pretrain(solid.as_deref(), std, cctk.as_deref(), model.as_deref(), &train, &ckpt)?
        }
        Command::Finetune { ckpt, train, task, config, out } => run_finetune(&ckpt, &train, &task, &config, &out)?,
        Command::Eval { ckpt, test, task, pred } => run_eval(&ckpt, &test, &task, pred.as_deref())?,
        Command::Model { command: ModelCommand::Inspect { ckpt } } => model_inspect(&ckpt)?,
        Command::Score { task, gold, pred, name, prefix, per_class, exclude_both_empty } => {
            score(task, &gold, &pred, &name, prefix.as_deref(), per_class.as_deref(), exclude_both_empty)?
        }
        Command::Grid { spec, out, format, runs } => return grid(&spec, &out, format, runs.as_deref()),
        Command::Zeroshot { ckpt, test, prefix, pred } => run_zeroshot(&ckpt, &test, prefix.as_deref(), pred.as_deref())?,
        Command::Report { input, format, out } => report(&input, format, out.as_deref())?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
