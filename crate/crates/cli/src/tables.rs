//! Column-oriented CSV readers for the correlation and importance commands.

use std::path::{Path, PathBuf};

use divscan_core::gbdt::FeatureRecord;
use indexmap::IndexMap;

use crate::failure::Failure;

const ID_COLUMN: &str = "model_id";

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, Failure> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.is_io_error() {
            true => Failure::Io(format!("{}: {e}", path.display())),
            false => Failure::from(e),
        })
}

fn number(cell: &str, path: &Path, row: usize, column: &str) -> Result<f64, Failure> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            Failure::Invalid(format!(
                "{}: row {row}, column '{column}': '{cell}' is not a finite number",
                path.display()
            ))
        })
}

/// Split `<csv>:<column>` at its last colon.
pub fn parse_column_spec(spec: &str) -> Result<(PathBuf, String), Failure> {
    match spec.rsplit_once(':') {
        Some((path, col)) if !path.is_empty() && !col.is_empty() => {
            Ok((PathBuf::from(path), col.to_owned()))
        }
        _ => Err(Failure::Invalid(format!(
            "expected <csv>:<column>, got '{spec}'"
        ))),
    }
}

pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, Failure> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| {
        Failure::Invalid(format!("{}: no column named '{column}'", path.display()))
    })?;
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = record.get(idx).ok_or_else(|| {
            Failure::Invalid(format!("{}: row {} is short", path.display(), row + 1))
        })?;
        values.push(number(cell, path, row + 1, column)?);
    }
    Ok(values)
}

/// Every column other than `model_id` and `target` is a numeric predictor.
pub fn read_feature_records(path: &Path, target: &str) -> Result<Vec<FeatureRecord>, Failure> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let target_idx = headers.iter().position(|h| h == target).ok_or_else(|| {
        Failure::Invalid(format!("{}: no target column '{target}'", path.display()))
    })?;
    let mut records = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut features = IndexMap::new();
        let mut transfer = None;
        for (i, (name, cell)) in headers.iter().zip(record.iter()).enumerate() {
            if name == ID_COLUMN {
                continue;
            }
            let v = number(cell, path, row + 1, name)?;
            if i == target_idx {
                transfer = Some(v);
            } else {
                features.insert(name.to_owned(), v);
            }
        }
        let transfer = transfer.ok_or_else(|| {
            Failure::Invalid(format!("{}: row {} has no target", path.display(), row + 1))
        })?;
        records.push(FeatureRecord { features, transfer });
    }
    Ok(records)
}
