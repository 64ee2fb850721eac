//! Data-dependent representation metrics: linear and minibatch CKA, the
//! stage-wise CKA abstraction score, and class variation/separation with the
//! mean silhouette coefficient under cosine distance.

mod cka;
mod class;

pub use cka::{
    cka_abstraction_score, cka_linear, cka_matrix, cka_minibatch, hsic_unbiased, ActivationMatrix,
};
pub use class::{class_metrics, ClassMetrics};
