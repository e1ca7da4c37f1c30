//! Task datasets: delimited files with a raw label column mapped through a
//! [`SchemeMapping`], and TSD-style span files.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use csv::ReaderBuilder;
use serde::{Deserialize, Serialize};

use super::scheme::{map_scheme, SchemeMapping};
use super::solid::locate_columns;
use super::{CorpusError, RawInstance, Source};
use crate::codec::CharSpanSet;

/// Column layout of a labeled task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledLayout {
    pub delimiter: char,
    /// When absent, ids are the 1-based data row number.
    pub id_column: Option<String>,
    pub text_column: String,
    pub label_column: String,
}

impl LabeledLayout {
    /// OLID's `id  tweet  subtask_a ...` layout.
    pub fn olid() -> Self {
        Self {
            delimiter: '\t',
            id_column: Some("id".into()),
            text_column: "tweet".into(),
            label_column: "subtask_a".into(),
        }
    }
}

pub fn read_labeled<R: Read>(
    reader: R,
    origin: &str,
    layout: &LabeledLayout,
    mapping: &SchemeMapping,
) -> Result<Vec<RawInstance>, CorpusError> {
    let delimiter = u8::try_from(layout.delimiter)
        .map_err(|_| CorpusError::Parse(format!("delimiter {:?} is not a single byte", layout.delimiter)))?;
    let mut rdr = ReaderBuilder::new()
        .delimiter(delimiter)
        .quoting(delimiter != b'\t')
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| CorpusError::csv(origin, e))?.clone();
    let mut wanted = vec![layout.text_column.as_str(), layout.label_column.as_str()];
    if let Some(id) = &layout.id_column {
        wanted.push(id);
    }
    let cols = locate_columns(&headers, &wanted, origin)?;
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CorpusError::csv(origin, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let label = map_scheme(&record[cols[1]], mapping).map_err(|e| CorpusError::row(origin, line, e.to_string()))?;
        let id = cols.get(2).map_or_else(|| (row + 1).to_string(), |&c| record[c].to_string());
        out.push(RawInstance::hard(id, &record[cols[0]], Source::Task, label));
    }
    Ok(out)
}

pub fn load_labeled(path: impl AsRef<Path>, layout: &LabeledLayout, mapping: &SchemeMapping) -> Result<Vec<RawInstance>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_labeled(BufReader::new(file), &path.display().to_string(), layout, mapping)
}

/// TSD layout: CSV with `spans` (a JSON list of character offsets) and `text`.
pub fn read_tsd<R: Read>(reader: R, origin: &str) -> Result<Vec<RawInstance>, CorpusError> {
    let mut rdr = ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers().map_err(|e| CorpusError::csv(origin, e))?.clone();
    let cols = locate_columns(&headers, &["spans", "text"], origin)?;
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CorpusError::csv(origin, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let offsets: Vec<usize> = serde_json::from_str(&record[cols[0]])
            .map_err(|e| CorpusError::row(origin, line, format!("spans: {e}")))?;
        let text = &record[cols[1]];
        let spans = CharSpanSet::from_indices(offsets);
        spans
            .check_within(text.chars().count())
            .map_err(|e| CorpusError::row(origin, line, e.to_string()))?;
        out.push(RawInstance { id: (row + 1).to_string(), text: text.to_string(), source: Source::Task, soft_label: None, hard_label: None, token_spans: Some(spans) });
    }
    Ok(out)
}

pub fn load_tsd(path: impl AsRef<Path>) -> Result<Vec<RawInstance>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_tsd(BufReader::new(file), &path.display().to_string())
}
