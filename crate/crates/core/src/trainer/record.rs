use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

/// One fine-tuning (or zero-shot) run of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Pretraining row, e.g. `SOLID_PLUS_CCTK`.
    pub combo: String,
    pub threshold: Option<f64>,
    pub task: String,
    pub seed: u64,
    /// Pretraining instances behind the row.
    pub instances: usize,
    pub eval_losses: Vec<f64>,
    pub score: f64,
    /// Share of test outputs that did not parse.
    pub invalid_rate: f64,
    pub wall_clock_secs: f64,
}

pub fn write_run_records<W: Write>(mut out: W, records: &[RunRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_run_records<R: BufRead>(input: R) -> std::io::Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        out.push(record);
    }
    Ok(out)
}
