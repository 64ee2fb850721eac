//! Feature-diversity analysis of neural-network weight checkpoints.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor_io`] loads weight bundles, embedding and accuracy tables, and
//!   writes JSON reports.
//! - [`weight_features`] turns layer tensors into feature matrices whose
//!   columns are the layer's features.
//! - [`diversity`] computes clustering and spectral feature diversity and the
//!   Calibrated Imagenet Score.
//! - [`repr_metrics`] holds the data-dependent baselines (CKA, class
//!   variation/separation, silhouette).
//! - [`transfer_stats`] scores transferability from accuracy tables and
//!   correlates predictors with it.
//! - [`gbdt`] is a small exact-split gradient-boosting regressor used for
//!   feature-importance analysis.
//! - [`toytrain`] is a desk-scale two-layer model with manual backprop used
//!   to exercise controlled label injection.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diversity;
pub mod error;
pub mod gbdt;
pub mod repr_metrics;
pub mod tensor_io;
pub mod toytrain;
pub mod transfer_stats;
pub mod weight_features;

pub use error::{Error, Result};
