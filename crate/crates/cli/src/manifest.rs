use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every report.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u128>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: &impl Serialize, record_wall_time: bool) -> Self {
        Self {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            parameters: serde_json::to_value(parameters).expect("arguments serialize to JSON"),
            inputs: Vec::new(),
            wall_time_ms: None,
            started: record_wall_time.then(Instant::now),
        }
    }

    /// Digest an input file, or every file under an input directory.
    pub fn input(&mut self, role: &str, path: &Path) -> Result<(), Failure> {
        let sha256 = digest_path(path)?;
        self.inputs.push(InputDigest {
            role: role.to_owned(),
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Write to `<report>.manifest.json`.
    pub fn write_for(mut self, report: &Path) -> Result<PathBuf, Failure> {
        self.wall_time_ms = self.started.map(|t| t.elapsed().as_millis());
        let mut name = report.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes to JSON");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<(), Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.push((key, path));
        }
    }
    Ok(())
}

/// SHA-256 of a file's bytes. For a directory, the hash runs over its files
/// in sorted relative-path order, each contributing its path, a NUL, its
/// byte length as little-endian u64, and its bytes.
pub fn digest_path(path: &Path) -> Result<String, Failure> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        for (rel, file) in files {
            let bytes = read(&file)?;
            hasher.update(rel.as_bytes());
            hasher.update([0u8]);
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    } else {
        hasher.update(read(path)?);
    }
    Ok(hex::encode(hasher.finalize()))
}
