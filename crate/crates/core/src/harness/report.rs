//! Result tables: rows are pretraining configurations with their instance
//! counts, columns are tasks, cells are `mean ± std` to three decimals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::GridReport;
use super::spec::Combo;
use super::HarnessError;
use crate::metrics::aggregate;
use crate::trainer::RunRecord;

const HEAD: [&str; 3] = ["Train Dataset(s)", "STD", "Inst."];
const NO_THRESHOLD: &str = "NA";
const MISSING: &str = "missing";

/// How the released-model row is chosen.
pub const RELEASE_RULE: &str =
    "the row with the most column-best cells; ties go to the higher mean over its cells, then to the earlier row";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(HarnessError::Report(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub threshold: Option<f64>,
    pub instances: usize,
    /// `(mean, std)` per task; `None` marks a missing cell.
    pub cells: Vec<Option<(f64, f64)>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub tasks: Vec<String>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleasedRow {
    pub row: usize,
    /// Columns in which the row holds a best cell.
    pub wins: usize,
    pub n_tasks: usize,
}

fn round3(x: f64) -> f64 {
    format!("{x:.3}").parse().expect("formatted float parses")
}

pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

fn parse_cell(s: &str) -> Result<Option<(f64, f64)>, HarnessError> {
    if s == MISSING {
        return Ok(None);
    }
    let bad = || HarnessError::Report(format!("malformed cell `{s}`"));
    let (m, d) = s.split_once(" ± ").ok_or_else(bad)?;
    Ok(Some((m.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?)))
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn threshold_text(t: Option<f64>) -> String {
    t.map_or_else(|| NO_THRESHOLD.to_string(), |t| t.to_string())
}

impl ReportTable {
    /// Best rounded mean of each column; `None` for empty columns.
    pub fn column_best(&self) -> Vec<Option<f64>> {
        (0..self.tasks.len())
            .map(|j| {
                self.rows.iter().filter_map(|r| r.cells[j].map(|(m, _)| round3(m))).fold(None, |best, m| {
                    Some(best.map_or(m, |b: f64| b.max(m)))
                })
            })
            .collect()
    }

    fn is_best(&self, best: &[Option<f64>], i: usize, j: usize) -> bool {
        matches!((self.rows[i].cells[j], best[j]), (Some((m, _)), Some(b)) if round3(m) == b)
    }

    /// Table of aggregated run records: rows in combo order then by
    /// threshold, tasks in first-seen order.
    pub fn from_records(records: &[RunRecord]) -> Result<Self, HarnessError> {
        let mut tasks: Vec<String> = Vec::new();
        type Key = (Combo, Option<u64>);
        let mut groups: BTreeMap<Key, (Option<f64>, usize, BTreeMap<String, Vec<f64>>)> = BTreeMap::new();
        for r in records {
            let combo: Combo = r.combo.parse()?;
            if !tasks.contains(&r.task) {
                tasks.push(r.task.clone());
            }
            // Thresholds are non-negative, so their bit patterns sort like the values.
            let entry = groups.entry((combo, r.threshold.map(f64::to_bits))).or_insert((r.threshold, r.instances, BTreeMap::new()));
            if entry.1 != r.instances {
                return Err(HarnessError::Report(format!("{} @ {:?}: inconsistent instance counts", r.combo, r.threshold)));
            }
            entry.2.entry(r.task.clone()).or_default().push(r.score);
        }
        let mut rows = Vec::with_capacity(groups.len());
        for ((combo, _), (threshold, instances, scores)) in groups {
            let cells = tasks
                .iter()
                .map(|t| scores.get(t).map(|s| aggregate(s).map(|a| (a.mean, a.std))).transpose())
                .collect::<Result<_, _>>()?;
            rows.push(ReportRow { label: combo.label().to_string(), threshold, instances, cells });
        }
        Ok(Self { tasks, rows })
    }
}

/// Row to release under [`RELEASE_RULE`]; `None` when no cell is present.
pub fn released_row(table: &ReportTable) -> Option<ReleasedRow> {
    let best = table.column_best();
    let mut choice: Option<(ReleasedRow, f64)> = None;
    for i in 0..table.rows.len() {
        let present: Vec<f64> = table.rows[i].cells.iter().flatten().map(|&(m, _)| round3(m)).collect();
        if present.is_empty() {
            continue;
        }
        let wins = (0..table.tasks.len()).filter(|&j| table.is_best(&best, i, j)).count();
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        let better = choice.as_ref().is_none_or(|(c, m)| wins > c.wins || (wins == c.wins && mean > *m));
        if better {
            choice = Some((ReleasedRow { row: i, wins, n_tasks: table.tasks.len() }, mean));
        }
    }
    choice.map(|(c, _)| c)
}

fn render_markdown(table: &ReportTable) -> String {
    let best = table.column_best();
    let mut out = String::new();
    let header: Vec<&str> = HEAD.iter().copied().chain(table.tasks.iter().map(String::as_str)).collect();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    let align: Vec<&str> = (0..header.len()).map(|k| if k < 2 { "---" } else { "---:" }).collect();
    out.push_str(&format!("| {} |\n", align.join(" | ")));
    for (i, row) in table.rows.iter().enumerate() {
        let mut cols = vec![row.label.clone(), threshold_text(row.threshold), thousands(row.instances)];
        for (j, cell) in row.cells.iter().enumerate() {
            cols.push(match cell {
                None => MISSING.to_string(),
                Some((m, s)) if table.is_best(&best, i, j) => format!("**{}**", format_cell(*m, *s)),
                Some((m, s)) => format_cell(*m, *s),
            });
        }
        out.push_str(&format!("| {} |\n", cols.join(" | ")));
    }
    if let Some(r) = released_row(table) {
        let row = &table.rows[r.row];
        out.push_str(&format!(
            "\nReleased model: {} at STD {} (best in {} of {} tasks). Rule: {RELEASE_RULE}.\n",
            row.label,
            threshold_text(row.threshold),
            r.wins,
            r.n_tasks
        ));
    }
    out
}

fn render_csv(table: &ReportTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = HEAD.iter().copied().chain(table.tasks.iter().map(String::as_str)).collect();
    w.write_record(&header).expect("in-memory write");
    for row in &table.rows {
        let mut cols = vec![row.label.clone(), threshold_text(row.threshold), row.instances.to_string()];
        cols.extend(row.cells.iter().map(|c| c.map_or_else(|| MISSING.to_string(), |(m, s)| format_cell(m, s))));
        w.write_record(&cols).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn render_table(table: &ReportTable, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(table),
        ReportFormat::Csv => render_csv(table),
    }
}

pub fn render_report(report: &GridReport, format: ReportFormat) -> String {
    render_table(&report.to_table(), format)
}

/// Inverse of the CSV rendering, up to the three-decimal rounding.
pub fn parse_csv(text: &str) -> Result<ReportTable, HarnessError> {
    let bad = |m: String| HarnessError::Report(m);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < HEAD.len() || header.iter().zip(HEAD).any(|(a, b)| a != b) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let tasks: Vec<String> = header.iter().skip(HEAD.len()).map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let threshold = match &record[1] {
            NO_THRESHOLD => None,
            t => Some(t.parse().map_err(|_| bad(format!("bad threshold `{t}`")))?),
        };
        let instances = record[2].parse().map_err(|_| bad(format!("bad instance count `{}`", &record[2])))?;
        let cells = record.iter().skip(HEAD.len()).map(parse_cell).collect::<Result<_, _>>()?;
        rows.push(ReportRow { label: record[0].to_string(), threshold, instances, cells });
    }
    Ok(ReportTable { tasks, rows })
}
