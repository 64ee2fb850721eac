use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::weight_features::FeatureMatrix;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Non-zero eigenvalues of WᵀW in decreasing order.
///
/// The smaller of WᵀW and WWᵀ is decomposed; both share their non-zero
/// spectrum.
pub fn gram_spectrum(features: &DMatrix<f64>) -> Result<Vec<f64>> {
    let gram = if features.nrows() <= features.ncols() {
        features * features.transpose()
    } else {
        features.transpose() * features
    };
    let dim = gram.nrows();
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 1000 * dim.max(1))
        .ok_or(Error::NoConvergence(dim))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    values.sort_unstable_by(|a, b| b.total_cmp(a));
    let top = values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) || !top.is_finite() {
        return Err(Error::Invalid(
            "feature matrix has no non-zero singular values".into(),
        ));
    }
    values.retain(|&v| v > RANK_TOLERANCE * top);
    Ok(values)
}

/// Cumulative explained-variance fractions Σ̄ᴷ for K = 1..d.
pub fn explained_variance_curve(features: &FeatureMatrix) -> Result<Vec<f64>> {
    let values = gram_spectrum(&features.matrix)?;
    let total: f64 = values.iter().sum();
    let mut acc = 0.0;
    Ok(values
        .iter()
        .map(|v| {
            acc += v;
            acc / total
        })
        .collect())
}

/// One minus the mean cumulative explained-variance fraction.
///
/// Rank-1 matrices score 0; d equal eigenvalues score (d - 1) / (2d).
pub fn spectral_diversity(features: &FeatureMatrix) -> Result<f64> {
    let curve = explained_variance_curve(features)?;
    let d = curve.len();
    if d <= 1 {
        return Ok(0.0);
    }
    Ok(1.0 - curve.iter().sum::<f64>() / d as f64)
}
