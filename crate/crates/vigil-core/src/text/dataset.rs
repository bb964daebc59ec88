//! Dataset file access.
//!
//! Datasets are UTF-8 CSV with RFC 4180 quoting and a header row. A `text`
//! column is required; a `label` column with values in {0, 1, 2} is required
//! for training and evaluation and optional for prediction input.

use std::path::Path;

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 3;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["clean", "offensive", "hate"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRow {
    pub text: String,
    pub label: Option<u8>,
}

/// Read every row of a dataset CSV.
pub fn read_csv(path: &Path) -> Result<Vec<DatasetRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(csv_to_error)?;
    let headers = reader.headers().map_err(csv_to_error)?.clone();
    let text_col = headers
        .iter()
        .position(|h| h == "text")
        .ok_or_else(|| Error::Format {
            line: 1,
            msg: "missing required 'text' column".into(),
        })?;
    let label_col = headers.iter().position(|h| h == "label");

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_to_error)?;
        let text = record
            .get(text_col)
            .ok_or_else(|| Error::Data(format!("row {}: missing text field", i + 1)))?
            .to_string();
        let label = match label_col {
            None => None,
            Some(c) => {
                let raw = record.get(c).unwrap_or("").trim();
                if raw.is_empty() {
                    None
                } else {
                    let value: i64 = raw.parse().map_err(|_| {
                        Error::Data(format!("row {}: label '{raw}' is not an integer", i + 1))
                    })?;
                    if !(0..NUM_CLASSES as i64).contains(&value) {
                        return Err(Error::Data(format!(
                            "row {}: label {value} outside {{0, 1, 2}}",
                            i + 1
                        )));
                    }
                    Some(value as u8)
                }
            }
        };
        rows.push(DatasetRow { text, label });
    }
    Ok(rows)
}

/// Labels of every row, or a data error naming the first unlabeled row.
pub fn require_labels(rows: &[DatasetRow]) -> Result<Vec<u8>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            r.label
                .ok_or_else(|| Error::Data(format!("row {}: missing label", i + 1)))
        })
        .collect()
}

fn csv_to_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                Error::Io(io)
            } else {
                unreachable!()
            }
        }
        _ => {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(0);
            Error::Format {
                line,
                msg: e.to_string(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_text_and_labels() {
        let f = write_tmp("text,label\n\"xin chào, bạn\",0\nđồ ngu,2\n");
        let rows = read_csv(f.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].text, "xin chào, bạn");
        assert_eq!(rows[0].label, Some(0));
        assert_eq!(rows[1].label, Some(2));
    }

    #[test]
    fn label_column_is_optional() {
        let f = write_tmp("text\nhello\n");
        let rows = read_csv(f.path()).unwrap();
        assert_eq!(rows[0].label, None);
    }

    #[test]
    fn out_of_range_label_names_row() {
        let f = write_tmp("text,label\nok,1\nbad,7\n");
        let err = read_csv(f.path()).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn missing_text_column_is_a_format_error() {
        let f = write_tmp("comment,label\nhi,0\n");
        let err = read_csv(f.path()).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }
}
