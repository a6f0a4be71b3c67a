use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnnotatedRecord, Record};
use crate::{Error, Result};

/// On-disk record formats.
///
/// TSV is `label<TAB>instruction` per line, UTF-8, no quoting. JSONL holds one
/// object per line with `label`, `instruction` and optional `spans`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Jsonl,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => Format::Tsv,
            _ => Format::Jsonl,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Format::Tsv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::Input(format!("unknown record format {other:?}"))),
        }
    }
}

pub fn load_records(path: impl AsRef<Path>, format: Format) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file), format).map_err(|e| attach_path(e, path))
}

pub fn load_annotated(path: impl AsRef<Path>) -> Result<Vec<AnnotatedRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_annotated(BufReader::new(file)).map_err(|e| attach_path(e, path))
}

fn attach_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// Reads records; rows are numbered from 1 and blank lines are skipped.
pub fn read_records(reader: impl BufRead, format: Format) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = match format {
            Format::Tsv => parse_tsv_row(&line, row)?,
            Format::Jsonl => {
                let raw: RawRow = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
                    row,
                    reason: e.to_string(),
                })?;
                raw.into_record(row)?
            }
        };
        records.push(record);
    }
    Ok(records)
}

pub fn read_annotated(reader: impl BufRead) -> Result<Vec<AnnotatedRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRow = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let spans = raw.spans.clone().unwrap_or_default();
        let record = raw.into_record(row)?;
        let annotated = AnnotatedRecord { record, spans };
        annotated
            .validate_spans()
            .map_err(|e| Error::MalformedRow {
                row,
                reason: e.to_string(),
            })?;
        records.push(annotated);
    }
    Ok(records)
}

fn parse_tsv_row(line: &str, row: usize) -> Result<Record> {
    let mut fields = line.splitn(2, '\t');
    let label = fields.next().unwrap_or_default();
    let instruction = fields.next().ok_or_else(|| Error::MalformedRow {
        row,
        reason: "expected two tab-separated fields".into(),
    })?;
    Record::new(label, instruction).map_err(|e| Error::MalformedRow {
        row,
        reason: e.to_string(),
    })
}

#[derive(Deserialize)]
struct RawRow {
    label: Option<String>,
    #[serde(alias = "text")]
    instruction: Option<String>,
    spans: Option<Vec<super::Span>>,
}

impl RawRow {
    fn into_record(self, row: usize) -> Result<Record> {
        let missing = |field: &str| Error::MalformedRow {
            row,
            reason: format!("missing field {field:?}"),
        };
        let label = self.label.ok_or_else(|| missing("label"))?;
        let instruction = self.instruction.ok_or_else(|| missing("instruction"))?;
        Record::new(label, instruction).map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })
    }
}

pub fn write_records(mut writer: impl Write, records: &[Record], format: Format) -> Result<()> {
    let io_err = |e| Error::io("<writer>", e);
    for record in records {
        match format {
            Format::Tsv => writeln!(writer, "{}\t{}", record.label, record.instruction),
            Format::Jsonl => writeln!(
                writer,
                "{}",
                serde_json::to_string(record).expect("record serializes")
            ),
        }
        .map_err(io_err)?;
    }
    Ok(())
}

pub fn write_annotated(mut writer: impl Write, records: &[AnnotatedRecord]) -> Result<()> {
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(writer, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entity, Span};

    #[test]
    fn tsv_row_from_discharge_summary() {
        let input = "docusate sodium\tdocusate sodium 100 mg Capsule Sig: One (1) Capsule PO BID (2 times a day) as needed for constipation.\n";
        let records = read_records(input.as_bytes(), Format::Tsv).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].label, "docusate sodium");
        assert!(records[0].instruction.starts_with("docusate sodium 100 mg"));
        assert!(records[0].instruction.ends_with("constipation."));
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(read_records("".as_bytes(), Format::Tsv).unwrap().is_empty());
        assert!(read_records("".as_bytes(), Format::Jsonl)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_column_row_is_malformed() {
        let input = "a\tb\nonly-one\n";
        match read_records(input.as_bytes(), Format::Tsv) {
            Err(Error::MalformedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected malformed row, got {other:?}"),
        }
        let input = "{\"label\":\"x\"}\n";
        assert!(matches!(
            read_records(input.as_bytes(), Format::Jsonl),
            Err(Error::MalformedRow { row: 1, .. })
        ));
    }

    #[test]
    fn whitespace_trimmed() {
        let records = read_records("  x \t  y z  \n".as_bytes(), Format::Tsv).unwrap();
        assert_eq!(records[0], Record::new("x", "y z").unwrap());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_records("/nonexistent/records.tsv", Format::Tsv).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/records.tsv"));
    }

    #[test]
    fn annotated_jsonl_uses_triples() {
        let record = AnnotatedRecord::new(
            Record::new("aspirin", "aspirin 81 mg").unwrap(),
            vec![
                Span::from((0, 7, Entity::Drug)),
                Span::from((8, 13, Entity::Strength)),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_annotated(&mut buf, std::slice::from_ref(&record)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            line.trim(),
            r#"{"label":"aspirin","instruction":"aspirin 81 mg","spans":[[0,7,"Drug"],[8,13,"Strength"]]}"#
        );
        assert_eq!(read_annotated(buf.as_slice()).unwrap(), vec![record]);
    }
}
