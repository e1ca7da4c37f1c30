//! SOLID-style TSV ingestion: `id<TAB>text<TAB>average<TAB>std`.
//!
//! Rows are streamed, so multi-million-row files can be filtered or counted
//! in constant memory through [`SolidReader`].

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use csv::{ByteRecord, ReaderBuilder, StringRecord};

use super::{CorpusError, RawInstance, SoftLabel, Source};

pub const SOLID_COLUMNS: [&str; 4] = ["id", "text", "average", "std"];

/// Streaming reader over a SOLID-style TSV.
pub struct SolidReader<R: Read> {
    inner: csv::Reader<R>,
    origin: String,
    columns: [usize; 4],
    record: ByteRecord,
}

impl SolidReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Self::new(BufReader::with_capacity(1 << 20, file), path.display().to_string())
    }
}

impl<R: Read> SolidReader<R> {
    pub fn new(reader: R, origin: impl Into<String>) -> Result<Self, CorpusError> {
        let origin = origin.into();
        let mut inner = ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .has_headers(true)
            .from_reader(reader);
        let headers = inner.headers().map_err(|e| CorpusError::csv(&origin, e))?.clone();
        let columns = locate_columns(&headers, &SOLID_COLUMNS, &origin)?;
        Ok(Self {
            inner,
            origin,
            columns: [columns[0], columns[1], columns[2], columns[3]],
            record: ByteRecord::new(),
        })
    }

    fn parse_record(&self) -> Result<RawInstance, CorpusError> {
        let line = self.record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<&str, CorpusError> {
            let bytes = self.record.get(self.columns[i]).ok_or_else(|| CorpusError::row(&self.origin, line, format!("missing `{name}` field")))?;
            std::str::from_utf8(bytes).map_err(|_| CorpusError::row(&self.origin, line, format!("`{name}` is not valid UTF-8")))
        };
        let number = |i: usize, name: &str| -> Result<f64, CorpusError> {
            let raw = field(i, name)?;
            raw.trim()
                .parse::<f64>()
                .map_err(|_| CorpusError::row(&self.origin, line, format!("non-numeric {name} `{raw}`")))
        };
        let mean = number(2, "average")?;
        let std = number(3, "std")?;
        let label = SoftLabel::new(mean, std).map_err(|e| CorpusError::row(&self.origin, line, e.to_string()))?;
        Ok(RawInstance::soft(field(0, "id")?, field(1, "text")?, Source::SolidLike, label))
    }
}

impl<R: Read> Iterator for SolidReader<R> {
    type Item = Result<RawInstance, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut record = std::mem::take(&mut self.record);
        let read = self.inner.read_byte_record(&mut record);
        self.record = record;
        match read {
            Ok(false) => None,
            Ok(true) => Some(self.parse_record()),
            Err(e) => Some(Err(CorpusError::csv(&self.origin, e))),
        }
    }
}

pub fn load_solid(path: impl AsRef<Path>) -> Result<Vec<RawInstance>, CorpusError> {
    SolidReader::open(path)?.collect()
}

/// Count how many rows survive each STD threshold in one streaming pass.
pub fn count_confident(path: impl AsRef<Path>, thresholds: &[f64]) -> Result<Vec<usize>, CorpusError> {
    let mut counts = vec![0usize; thresholds.len()];
    for row in SolidReader::open(path)? {
        let std = row?.soft_label.map(|s| s.std).unwrap_or(f64::INFINITY);
        for (count, &t) in counts.iter_mut().zip(thresholds) {
            if std <= t {
                *count += 1;
            }
        }
    }
    Ok(counts)
}

pub(crate) fn locate_columns(headers: &StringRecord, wanted: &[&str], origin: &str) -> Result<Vec<usize>, CorpusError> {
    wanted
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim().trim_start_matches('\u{feff}') == *name)
                .ok_or_else(|| CorpusError::MissingColumn { path: origin.to_string(), column: name.to_string() })
        })
        .collect()
}

/// Write instances in SOLID TSV layout. Text must not contain tabs or newlines.
pub fn write_solid<W: std::io::Write>(mut out: W, rows: &[RawInstance]) -> Result<(), CorpusError> {
    let io = |e| CorpusError::io("<solid writer>", e);
    writeln!(out, "{}", SOLID_COLUMNS.join("\t")).map_err(io)?;
    for row in rows {
        let soft = row
            .soft_label
            .ok_or_else(|| CorpusError::MissingSoftLabel { id: row.id.clone() })?;
        if row.text.contains(['\t', '\n', '\r']) {
            return Err(CorpusError::Parse(format!("{}: text contains a tab or newline", row.id)));
        }
        writeln!(out, "{}\t{}\t{}\t{}", row.id, row.text, soft.mean, soft.std).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(data: &str) -> Result<Vec<RawInstance>, CorpusError> {
        SolidReader::new(data.as_bytes(), "fixture")?.collect()
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read("id\ttext\taverage\tstd\n").unwrap().is_empty());
    }

    #[test]
    fn fixture_written_by_writer_matches_independent_parse() {
        let rows = vec![
            RawInstance::soft("1", "you are \"great\"", Source::SolidLike, SoftLabel::new(0.9, 0.05).unwrap()),
            RawInstance::soft("2", "  spaced  out ", Source::SolidLike, SoftLabel::new(0.2, 0.11).unwrap()),
            RawInstance::soft("3", "ünïcode 🙂 text", Source::SolidLike, SoftLabel::new(0.6, 0.3).unwrap()),
        ];
        let mut buf = Vec::new();
        write_solid(&mut buf, &rows).unwrap();
        let data = String::from_utf8(buf).unwrap();

        // independent line parser
        let by_hand: Vec<(String, String, f64, f64)> = data
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                (f[0].into(), f[1].into(), f[2].parse().unwrap(), f[3].parse().unwrap())
            })
            .collect();
        let parsed = read(&data).unwrap();
        assert_eq!(parsed.len(), 3);
        for (p, h) in parsed.iter().zip(&by_hand) {
            let soft = p.soft_label.unwrap();
            assert_eq!((p.id.as_str(), p.text.as_str(), soft.mean, soft.std), (h.0.as_str(), h.1.as_str(), h.2, h.3));
        }
        assert_eq!(parsed, rows);
        let means: Vec<f64> = parsed.iter().map(|r| r.soft_label.unwrap().mean).collect();
        assert_eq!(means, [0.9, 0.2, 0.6]);
    }

    #[test]
    fn columns_are_found_by_name() {
        let rows = read("std\taverage\tid\ttext\n0.1\t0.7\tx\thello\n").unwrap();
        assert_eq!(rows[0].id, "x");
        assert_eq!(rows[0].soft_label.unwrap(), SoftLabel { mean: 0.7, std: 0.1 });
    }

    #[test]
    fn missing_column_is_named() {
        let err = read("id\ttext\taverage\n").unwrap_err();
        assert!(matches!(&err, CorpusError::MissingColumn { column, .. } if column == "std"), "{err}");
    }

    #[test]
    fn non_numeric_value_reports_line() {
        let err = read("id\ttext\taverage\tstd\n1\tok\t0.5\t0.1\n2\tbad\tabc\t0.1\n").unwrap_err();
        match err {
            CorpusError::Row { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("average"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn crlf_line_endings_are_stripped() {
        let rows = read("id\ttext\taverage\tstd\r\n1\thi there\t0.5\t0.1\r\n").unwrap();
        assert_eq!(rows[0].text, "hi there");
    }
}
