//! On-disk formats: weight bundles, embedding and accuracy CSVs, JSON reports.
//!
//! A bundle is a directory holding `manifest.json` plus one raw blob per
//! layer. Blobs are little-endian IEEE-754 binary32, row-major, no header.
//! Values are stored as `f32` and widened to `f64` for all computation.

mod bundle;
mod report;
mod tables;

pub use bundle::{load_bundle, write_bundle, LayerKind, LayerTensor, TensorBundle, MANIFEST_FILE};
pub use report::{read_report, write_report, Report};
pub use tables::{
    clamp_accuracy, load_accuracy_table, load_embeddings, AccuracyTable, EmbeddingSet,
    DEFAULT_CLAMP_EPS,
};
