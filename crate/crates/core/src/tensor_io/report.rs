use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// A JSON-serialisable result document with an internal consistency check
/// that runs before anything touches the disk.
pub trait Report: Serialize {
    fn validate(&self) -> Result<()>;
}

/// Validate and write `report` as pretty-printed UTF-8 JSON.
///
/// Keys follow struct declaration order, and floats are rendered as the
/// shortest decimal that parses back to the same `f64`.
pub fn write_report<R: Report>(report: &R, path: impl AsRef<Path>) -> Result<()> {
    report.validate()?;
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::parse("report", e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report<R: DeserializeOwned>(path: impl AsRef<Path>) -> Result<R> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse("report", e))
}
