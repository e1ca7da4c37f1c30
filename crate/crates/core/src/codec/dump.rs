//! Prediction dumps: one JSON record per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub output_text: String,
    /// Parsed sentence label (`OFF`, `NOT`, `TOX`) for sentence tasks.
    pub label: Option<String>,
    /// Parsed spans (`8-13,20-24`) for token tasks.
    pub spans: Option<String>,
    pub parse_ok: bool,
}

pub fn write_predictions<W: Write>(mut out: W, records: &[PredictionRecord]) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_predictions<R: BufRead>(reader: R) -> std::io::Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_roundtrip() {
        let recs = vec![
            PredictionRecord { id: "1".into(), output_text: "OFF".into(), label: Some("OFF".into()), spans: None, parse_ok: true },
            PredictionRecord { id: "2".into(), output_text: "a [OFF]".into(), label: None, spans: Some(String::new()), parse_ok: false },
        ];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &recs).unwrap();
        assert_eq!(read_predictions(buf.as_slice()).unwrap(), recs);
    }
}
