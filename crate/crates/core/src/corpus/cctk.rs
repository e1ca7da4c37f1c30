//! CCTK-style CSV ingestion: `id,comment_text,target` with RFC 4180 quoting.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use super::solid::locate_columns;
use super::{CanonicalLabel, CorpusError, RawInstance, Source};

pub const CCTK_COLUMNS: [&str; 3] = ["id", "comment_text", "target"];

/// Toxic iff the annotator fraction reaches one half.
pub const CCTK_TOXIC_AT: f64 = 0.5;

pub fn cctk_label(target: f64) -> CanonicalLabel {
    if target >= CCTK_TOXIC_AT {
        CanonicalLabel::TOX
    } else {
        CanonicalLabel::NOT_TOX
    }
}

pub struct CctkReader<R: Read> {
    inner: csv::Reader<R>,
    origin: String,
    columns: Vec<usize>,
    record: StringRecord,
}

impl CctkReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Self::new(BufReader::with_capacity(1 << 20, file), path.display().to_string())
    }
}

impl<R: Read> CctkReader<R> {
    pub fn new(reader: R, origin: impl Into<String>) -> Result<Self, CorpusError> {
        let origin = origin.into();
        let mut inner = ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = inner.headers().map_err(|e| CorpusError::csv(&origin, e))?.clone();
        let columns = locate_columns(&headers, &CCTK_COLUMNS, &origin)?;
        Ok(Self { inner, origin, columns, record: StringRecord::new() })
    }

    fn parse_record(&self) -> Result<RawInstance, CorpusError> {
        let line = self.record.position().map_or(0, |p| p.line());
        let get = |i: usize| self.record.get(self.columns[i]).unwrap_or_default();
        let raw_target = get(2);
        let target: f64 = raw_target
            .trim()
            .parse()
            .map_err(|_| CorpusError::row(&self.origin, line, format!("non-numeric target `{raw_target}`")))?;
        if !(0.0..=1.0).contains(&target) {
            return Err(CorpusError::row(&self.origin, line, format!("target {target} outside [0, 1]")));
        }
        Ok(RawInstance::hard(get(0), get(1), Source::CctkLike, cctk_label(target)))
    }
}

impl<R: Read> Iterator for CctkReader<R> {
    type Item = Result<RawInstance, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut record = std::mem::take(&mut self.record);
        let read = self.inner.read_record(&mut record);
        self.record = record;
        match read {
            Ok(false) => None,
            Ok(true) => Some(self.parse_record()),
            Err(e) => Some(Err(CorpusError::csv(&self.origin, e))),
        }
    }
}

pub fn load_cctk(path: impl AsRef<Path>) -> Result<Vec<RawInstance>, CorpusError> {
    CctkReader::open(path)?.collect()
}
