//! Reshape layer weight tensors into feature matrices.
//!
//! Every feature matrix is d×n with one feature per column: a flattened
//! output filter for convolutions, an output unit's weight vector for
//! fully-connected layers, and a per-head projection column for attention.

use nalgebra::DMatrix;
use regex::Regex;

use crate::error::{ensure, Result};
use crate::tensor_io::{LayerKind, LayerTensor, TensorBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub layer_name: String,
    /// `"{kind}.h{head}"` for attention projections, empty otherwise.
    pub sub_unit: String,
    pub matrix: DMatrix<f64>,
    /// Exact-zero columns removed by [`FeatureMatrix::drop_zero_columns`].
    pub zero_dropped: usize,
}

impl FeatureMatrix {
    /// Wrap a matrix whose columns are features.
    pub fn new(
        layer_name: impl Into<String>,
        sub_unit: impl Into<String>,
        matrix: DMatrix<f64>,
    ) -> Result<Self> {
        let layer_name = layer_name.into();
        ensure!(
            matrix.nrows() >= 1,
            "layer '{layer_name}': features have zero dimension"
        );
        ensure!(
            matrix.ncols() >= 2,
            "layer '{layer_name}': {} feature(s), at least 2 are needed",
            matrix.ncols()
        );
        Ok(Self {
            layer_name,
            sub_unit: sub_unit.into(),
            matrix,
            zero_dropped: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.matrix.ncols()
    }

    /// Remove columns that are exactly zero and return how many were removed.
    /// Fails if fewer than two features remain.
    pub fn drop_zero_columns(&mut self) -> Result<usize> {
        let keep: Vec<usize> = (0..self.matrix.ncols())
            .filter(|&j| self.matrix.column(j).iter().any(|&v| v != 0.0))
            .collect();
        let dropped = self.matrix.ncols() - keep.len();
        if dropped > 0 {
            ensure!(
                keep.len() >= 2,
                "layer '{}' {}: only {} non-zero feature(s) remain",
                self.layer_name,
                self.sub_unit,
                keep.len()
            );
            self.matrix = self.matrix.select_columns(&keep);
            self.zero_dropped += dropped;
        }
        Ok(dropped)
    }
}

/// Row-major `rows × cols` block of `data` starting at `row0`, widened to f64.
fn row_major_block(data: &[f32], row0: usize, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |r, c| f64::from(data[(row0 + r) * cols + c]))
}

/// (k, k, n_in, n_out) → (k²·n_in) × n_out. Filters are flattened in the
/// row-major order of the leading three axes.
pub fn features_of_conv(layer: &LayerTensor) -> Result<FeatureMatrix> {
    ensure!(
        layer.kind() == LayerKind::Conv && layer.shape().len() == 4,
        "layer '{}': expected a 4-axis conv tensor, got {} {:?}",
        layer.name(),
        layer.kind(),
        layer.shape()
    );
    let n_out = layer.shape()[3];
    let d = layer.len() / n_out;
    FeatureMatrix::new(layer.name(), "", row_major_block(layer.data(), 0, d, n_out))
}

pub fn features_of_fc(layer: &LayerTensor) -> Result<FeatureMatrix> {
    ensure!(
        layer.kind() == LayerKind::FullyConnected && layer.shape().len() == 2,
        "layer '{}': expected a 2-axis fully_connected tensor, got {} {:?}",
        layer.name(),
        layer.kind(),
        layer.shape()
    );
    let (rows, cols) = (layer.shape()[0], layer.shape()[1]);
    FeatureMatrix::new(
        layer.name(),
        "",
        row_major_block(layer.data(), 0, rows, cols),
    )
}

/// One feature matrix per head, each built from that head's contiguous
/// block of `in / heads` input rows.
pub fn features_of_msa(layer: &LayerTensor) -> Result<Vec<FeatureMatrix>> {
    ensure!(
        layer.kind().is_msa() && layer.shape().len() == 2,
        "layer '{}': expected a 2-axis attention projection, got {} {:?}",
        layer.name(),
        layer.kind(),
        layer.shape()
    );
    let (input, proj) = (layer.shape()[0], layer.shape()[1]);
    let heads = layer.heads();
    ensure!(
        input % heads == 0,
        "layer '{}': input width {input} is not divisible by {heads} heads",
        layer.name()
    );
    let rows = input / heads;
    (0..heads)
        .map(|h| {
            FeatureMatrix::new(
                layer.name(),
                format!("{}.h{h}", layer.kind()),
                row_major_block(layer.data(), h * rows, rows, proj),
            )
        })
        .collect()
}

/// Features of one layer, or `None` for kinds that carry no weight features.
pub fn features_of_layer(layer: &LayerTensor) -> Result<Option<Vec<FeatureMatrix>>> {
    Ok(match layer.kind() {
        LayerKind::Conv => Some(vec![features_of_conv(layer)?]),
        LayerKind::FullyConnected => Some(vec![features_of_fc(layer)?]),
        LayerKind::MsaQ | LayerKind::MsaK | LayerKind::MsaV => Some(features_of_msa(layer)?),
        LayerKind::Activation | LayerKind::Bias => None,
    })
}

/// Extract every feature matrix of a bundle in manifest order, skipping
/// layers whose name matches `exclude` and dropping exact-zero columns.
pub fn extract_all(bundle: &TensorBundle, exclude: Option<&Regex>) -> Result<Vec<FeatureMatrix>> {
    let mut out = Vec::new();
    for layer in bundle.layers() {
        if exclude.is_some_and(|re| re.is_match(layer.name())) {
            continue;
        }
        if let Some(units) = features_of_layer(layer)? {
            for mut unit in units {
                unit.drop_zero_columns()?;
                out.push(unit);
            }
        }
    }
    Ok(out)
}
