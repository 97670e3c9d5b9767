//! CSV ingestion against a schema.

use std::io::Read;
use std::path::Path;

use crate::data::{Dataset, Schema};
use crate::error::{Error, Result};

/// Read a headed CSV; columns not in the schema are ignored. Row numbers in
/// errors count data rows from 1.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema, delimiter: u8) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers()?.clone();
    let columns = schema
        .attributes()
        .iter()
        .map(|a| {
            header.iter().position(|h| h == a.name).ok_or_else(|| Error::Ingest {
                row: 0,
                column: a.name.clone(),
                message: "missing from header".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dataset = Dataset::empty(schema.clone());
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let row = columns
            .iter()
            .zip(schema.attributes())
            .map(|(&c, spec)| {
                let bad = |message: String| Error::Ingest { row: i + 1, column: spec.name.clone(), message };
                let text = record.get(c).ok_or_else(|| bad("field missing".into()))?;
                let value = spec.parse_value(text).ok_or_else(|| bad(format!("cannot parse `{text}`")))?;
                if !spec.contains(value) {
                    return Err(bad(format!("{value} outside [{}, {}]", spec.lower, spec.upper)));
                }
                Ok(value)
            })
            .collect::<Result<Vec<f64>>>()?;
        dataset.push(row)?;
    }
    Ok(dataset)
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema, delimiter: u8) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?, schema, delimiter)
}
