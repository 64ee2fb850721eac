use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Layer kinds a bundle may declare.
///
/// Only `conv`, `fully_connected` and the three attention projections carry
/// weight features. `activation` holds an n×p activation matrix for the
/// representation metrics and `bias` holds a 1-axis parameter vector; both
/// are skipped by feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    FullyConnected,
    MsaQ,
    MsaK,
    MsaV,
    Activation,
    Bias,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::FullyConnected => "fully_connected",
            LayerKind::MsaQ => "msa_q",
            LayerKind::MsaK => "msa_k",
            LayerKind::MsaV => "msa_v",
            LayerKind::Activation => "activation",
            LayerKind::Bias => "bias",
        }
    }

    pub fn is_msa(self) -> bool {
        matches!(self, LayerKind::MsaQ | LayerKind::MsaK | LayerKind::MsaV)
    }

    fn arity(self) -> usize {
        match self {
            LayerKind::Conv => 4,
            LayerKind::Bias => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensor {
    name: String,
    kind: LayerKind,
    shape: Vec<usize>,
    heads: usize,
    data: Vec<f32>,
}

impl LayerTensor {
    pub fn new(
        name: impl Into<String>,
        kind: LayerKind,
        shape: Vec<usize>,
        heads: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let name = name.into();
        ensure!(!name.is_empty(), "layer name must not be empty");
        ensure!(
            shape.len() == kind.arity(),
            "layer '{name}': kind {kind} expects {} axes, got shape {shape:?}",
            kind.arity()
        );
        ensure!(
            shape.iter().all(|&s| s > 0),
            "layer '{name}': shape {shape:?} has a zero axis"
        );
        ensure!(heads >= 1, "layer '{name}': heads must be positive");
        if kind.is_msa() {
            ensure!(
                shape[0].is_multiple_of(heads),
                "layer '{name}': input width {} is not divisible by {heads} heads",
                shape[0]
            );
        } else {
            ensure!(
                heads == 1,
                "layer '{name}': heads is only meaningful for msa kinds"
            );
        }
        let count: usize = shape.iter().product();
        ensure!(
            data.len() == count,
            "layer '{name}': shape {shape:?} needs {count} elements, got {}",
            data.len()
        );
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid!("layer '{name}': non-finite value at element {i}"));
        }
        Ok(Self {
            name,
            kind,
            shape,
            heads,
            data,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorBundle {
    model_id: String,
    layers: Vec<LayerTensor>,
    upstream_accuracy: Option<f64>,
}

impl TensorBundle {
    pub fn new(
        model_id: impl Into<String>,
        layers: Vec<LayerTensor>,
        upstream_accuracy: Option<f64>,
    ) -> Result<Self> {
        let model_id = model_id.into();
        let mut seen = HashSet::new();
        for layer in &layers {
            ensure!(
                seen.insert(layer.name.as_str()),
                "duplicate layer name '{}' in bundle '{model_id}'",
                layer.name
            );
        }
        if let Some(acc) = upstream_accuracy {
            ensure!(
                (0.0..=1.0).contains(&acc),
                "upstream accuracy {acc} is outside [0, 1]"
            );
        }
        Ok(Self {
            model_id,
            layers,
            upstream_accuracy,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn layers(&self) -> &[LayerTensor] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&LayerTensor> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn upstream_accuracy(&self) -> Option<f64> {
        self.upstream_accuracy
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upstream_accuracy: Option<f64>,
    layers: Vec<ManifestLayer>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLayer {
    name: String,
    kind: LayerKind,
    shape: Vec<usize>,
    #[serde(default = "one")]
    heads: usize,
    file: String,
}

fn one() -> usize {
    1
}

/// Load and validate a bundle directory. Layer order follows the manifest.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<TensorBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse("manifest", e))?;

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in manifest.layers {
        let rel = Path::new(&entry.file);
        ensure!(
            rel.components().all(|c| matches!(c, Component::Normal(_))),
            "layer '{}': blob path '{}' must be relative and stay inside the bundle",
            entry.name,
            entry.file
        );
        let blob_path = dir.join(rel);
        let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let count: usize = entry.shape.iter().product();
        ensure!(
            bytes.len() == count * 4,
            "layer '{}': shape {:?} needs {} bytes, blob has {}",
            entry.name,
            entry.shape,
            count * 4,
            bytes.len()
        );
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        layers.push(LayerTensor::new(
            entry.name,
            entry.kind,
            entry.shape,
            entry.heads,
            data,
        )?);
    }
    TensorBundle::new(manifest.model_id, layers, manifest.upstream_accuracy)
}

/// Write a bundle directory. Blob files are named by layer position.
pub fn write_bundle(bundle: &TensorBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut entries = Vec::with_capacity(bundle.layers.len());
    for (i, layer) in bundle.layers.iter().enumerate() {
        let file = format!("layer{i:04}.bin");
        let bytes: Vec<u8> = layer.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestLayer {
            name: layer.name.clone(),
            kind: layer.kind,
            shape: layer.shape.clone(),
            heads: layer.heads,
            file,
        });
    }
    let manifest = Manifest {
        model_id: bundle.model_id.clone(),
        upstream_accuracy: bundle.upstream_accuracy,
        layers: entries,
    };
    let mut text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse("manifest", e))?;
    text.push('\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
