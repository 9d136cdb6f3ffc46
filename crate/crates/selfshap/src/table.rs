//! Delimited-text input.

use std::fs::File;
use std::path::Path;

use selfshap_core::data::{infer_schema, DatasetSchema, RawTable, SchemaHints};

use crate::error::{Error, Result};

/// Reads an RFC 4180 file with a header row. Every record must have as many
/// fields as the header.
pub fn read_table(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_error = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        let message = match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                format!("expected {expected_len} fields, found {len}")
            }
            _ => e.to_string(),
        };
        Error::Csv {
            path: path.to_path_buf(),
            line,
            message,
        }
    };
    let headers: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(RawTable { headers, rows })
}

/// Reads a table and types its columns from `hints` and content.
pub fn load_csv(path: &Path, hints: &SchemaHints) -> Result<(RawTable, DatasetSchema)> {
    let raw = read_table(path)?;
    let schema = infer_schema(&raw, hints)?;
    Ok((raw, schema))
}

/// Writes a header row followed by string records.
pub fn write_table(path: &Path, headers: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let wrap = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    writer.write_record(headers).map_err(wrap)?;
    for row in rows {
        writer.write_record(&row).map_err(wrap)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
