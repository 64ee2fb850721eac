use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tensor_io::{EmbeddingSet, Report};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub v_intra: f64,
    pub s_inter: f64,
    pub msc: f64,
}

impl Report for ClassMetrics {
    fn validate(&self) -> Result<()> {
        ensure!(
            self.v_intra.is_finite() && self.v_intra >= 0.0,
            "v_intra = {} must be finite and non-negative",
            self.v_intra
        );
        ensure!(
            self.s_inter.is_finite() && self.s_inter >= 0.0,
            "s_inter = {} must be finite and non-negative",
            self.s_inter
        );
        ensure!(
            (-1.0..=1.0).contains(&self.msc),
            "msc = {} is outside [-1, 1]",
            self.msc
        );
        Ok(())
    }
}

/// Cosine distances below this are rounding noise between parallel vectors.
const PARALLEL_DIST: f64 = 8.0 * f64::EPSILON;

/// Intra-class variation, inter-class separation and mean silhouette
/// coefficient, all under cosine distance 1 − cos.
///
/// Intra-class sums run over all N_k² ordered pairs including self-pairs.
/// Silhouette uses max(s, v) in the denominator; examples in singleton
/// classes score 0.
pub fn class_metrics(emb: &EmbeddingSet) -> Result<ClassMetrics> {
    let k = emb.num_classes();
    ensure!(k >= 2, "class metrics need at least 2 classes, got {k}");
    let mut counts = vec![0usize; k];
    for &l in emb.labels() {
        counts[l] += 1;
    }
    ensure!(
        counts.iter().all(|&c| c > 0),
        "every class needs at least one example"
    );

    let mut unit = emb.vectors().clone();
    for (i, mut row) in unit.row_iter_mut().enumerate() {
        let norm = row.norm();
        ensure!(
            norm > 0.0,
            "embedding row {i} is the zero vector; cosine is undefined"
        );
        row /= norm;
    }
    let labels = emb.labels();
    let n = labels.len();

    // dist_to_class[m][c] = Σ_{n ∈ c} (1 − cos(x_m, x_n))
    let dist_to_class: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|m| {
            let xm = unit.row(m);
            let mut sums = vec![0.0; k];
            for (j, &lj) in labels.iter().enumerate() {
                if j != m {
                    let dist = 1.0 - xm.dot(&unit.row(j)).clamp(-1.0, 1.0);
                    sums[lj] += if dist < PARALLEL_DIST { 0.0 } else { dist };
                }
            }
            sums
        })
        .collect();

    let mut pair_sums = vec![vec![0.0; k]; k];
    for (m, row) in dist_to_class.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            pair_sums[labels[m]][c] += v;
        }
    }
    let kf = k as f64;
    let v_intra = (0..k)
        .map(|c| pair_sums[c][c] / (kf * (counts[c] * counts[c]) as f64))
        .sum();
    let s_inter = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .map(|(a, b)| pair_sums[a][b] / (kf * kf * (counts[a] * counts[b]) as f64))
        .sum();

    let silhouette_sum: f64 = dist_to_class
        .iter()
        .zip(labels)
        .map(|(row, &own)| {
            if counts[own] == 1 {
                return 0.0;
            }
            let v = row[own] / (counts[own] - 1) as f64;
            let s = (0..k)
                .filter(|&c| c != own)
                .map(|c| row[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let scale = s.max(v);
            if scale > 0.0 {
                (s - v) / scale
            } else {
                0.0
            }
        })
        .sum();

    Ok(ClassMetrics {
        v_intra,
        s_inter,
        msc: (silhouette_sum / n as f64).clamp(-1.0, 1.0),
    })
}
