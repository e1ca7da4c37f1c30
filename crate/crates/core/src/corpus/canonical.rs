//! Line-delimited canonical interchange records.
//!
//! Each line is a JSON object with the fields
//! `id, text, source, mean, std, label, spans`. Absent values are `null`;
//! labels are written `SCHEME:VALUE` and spans as inclusive ranges
//! (`"8-13,20-24"`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CanonicalLabel, CorpusError, RawInstance, SoftLabel, Source};
use crate::codec::CharSpanSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRecord {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub label: Option<String>,
    pub spans: Option<String>,
}

impl From<&RawInstance> for CanonicalRecord {
    fn from(row: &RawInstance) -> Self {
        Self {
            id: row.id.clone(),
            text: row.text.clone(),
            source: row.source,
            mean: row.soft_label.map(|s| s.mean),
            std: row.soft_label.map(|s| s.std),
            label: row.hard_label.map(|l| l.qualified()),
            spans: row.token_spans.as_ref().map(CharSpanSet::to_string),
        }
    }
}

impl TryFrom<CanonicalRecord> for RawInstance {
    type Error = CorpusError;

    fn try_from(rec: CanonicalRecord) -> Result<Self, Self::Error> {
        let soft_label = match (rec.mean, rec.std) {
            (Some(mean), Some(std)) => Some(SoftLabel::new(mean, std)?),
            (None, None) => None,
            _ => return Err(CorpusError::Parse(format!("{}: mean and std must both be present", rec.id))),
        };
        let row = RawInstance {
            hard_label: rec.label.as_deref().map(CanonicalLabel::parse_qualified).transpose()?,
            token_spans: rec
                .spans
                .as_deref()
                .map(|s| s.parse::<CharSpanSet>().map_err(|e| CorpusError::Parse(format!("{}: {e}", rec.id))))
                .transpose()?,
            id: rec.id,
            text: rec.text,
            source: rec.source,
            soft_label,
        };
        row.validate()?;
        Ok(row)
    }
}

/// Streaming reader; yields one instance per non-empty line.
pub struct CanonicalReader<R: BufRead> {
    lines: std::io::Lines<R>,
    origin: String,
    line: u64,
}

impl CanonicalReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(Self::new(BufReader::with_capacity(1 << 20, file), path.display().to_string()))
    }
}

impl<R: BufRead> CanonicalReader<R> {
    pub fn new(reader: R, origin: impl Into<String>) -> Self {
        Self { lines: reader.lines(), origin: origin.into(), line: 0 }
    }
}

impl<R: BufRead> Iterator for CanonicalReader<R> {
    type Item = Result<RawInstance, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(CorpusError::io(&self.origin, e))),
            };
            self.line += 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<CanonicalRecord>(&line)
                .map_err(|e| CorpusError::row(&self.origin, self.line, e.to_string()))
                .and_then(|rec| {
                    RawInstance::try_from(rec).map_err(|e| CorpusError::row(&self.origin, self.line, e.to_string()))
                });
            return Some(parsed);
        }
    }
}

pub fn load_canonical(path: impl AsRef<Path>) -> Result<Vec<RawInstance>, CorpusError> {
    CanonicalReader::open(path)?.collect()
}

pub fn write_canonical_to<W: Write>(mut out: W, rows: impl IntoIterator<Item = RawInstance>) -> Result<usize, CorpusError> {
    let mut n = 0;
    for row in rows {
        let line = serde_json::to_string(&CanonicalRecord::from(&row)).map_err(|e| CorpusError::Parse(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| CorpusError::io("<canonical writer>", e))?;
        n += 1;
    }
    out.flush().map_err(|e| CorpusError::io("<canonical writer>", e))?;
    Ok(n)
}

pub fn write_canonical(path: impl AsRef<Path>, rows: impl IntoIterator<Item = RawInstance>) -> Result<usize, CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_canonical_to(BufWriter::new(file), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_fields_are_always_present() {
        let row = RawInstance::hard("a", "t", Source::CctkLike, CanonicalLabel::TOX);
        let line = serde_json::to_string(&CanonicalRecord::from(&row)).unwrap();
        assert_eq!(
            line,
            r#"{"id":"a","text":"t","source":"CCTK_LIKE","mean":null,"std":null,"label":"CCTK:TOX","spans":null}"#
        );
    }

    #[test]
    fn reader_rejects_spans_outside_text() {
        let data = r#"{"id":"a","text":"abc","source":"TASK","mean":null,"std":null,"label":null,"spans":"1-5"}"#;
        let err = CanonicalReader::new(data.as_bytes(), "x").next().unwrap().unwrap_err();
        assert!(matches!(err, CorpusError::Row { line: 1, .. }), "{err}");
    }

    #[test]
    fn reader_skips_blank_lines() {
        let data = "\n{\"id\":\"a\",\"text\":\"abc\",\"source\":\"SOLID_LIKE\",\"mean\":0.25,\"std\":0.0,\"label\":null,\"spans\":null}\n\n";
        let rows: Vec<_> = CanonicalReader::new(data.as_bytes(), "x").collect::<Result<_, _>>().unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].soft_label, Some(SoftLabel { mean: 0.25, std: 0.0 }));
    }
}
