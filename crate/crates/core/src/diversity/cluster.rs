//! Greedy average-linkage agglomeration under cosine similarity.
//!
//! Clusters are merged in order of decreasing mean pairwise cosine; the
//! pair chosen at each step does not depend on the threshold, so the full
//! merge sequence answers every threshold query: at τ the clustering is the
//! longest prefix of merges whose similarity is strictly above τ.

use nalgebra::DMatrix;

use super::ClusterParams;
use crate::weight_features::FeatureMatrix;

/// One merge step. Clusters are identified by their smallest original
/// column index; `left < right` and the merged cluster keeps `left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeSequence {
    n: usize,
    merges: Vec<Merge>,
}

impl MergeSequence {
    pub fn num_features(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    fn merges_above(&self, tau: f64) -> usize {
        self.merges
            .iter()
            .take_while(|m| m.similarity > tau)
            .count()
    }

    pub fn num_clusters(&self, tau: f64) -> usize {
        self.n - self.merges_above(tau)
    }

    /// Clusters at threshold `tau`, each sorted, ordered by smallest member.
    pub fn partition(&self, tau: f64) -> Vec<Vec<usize>> {
        let mut members: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
        for m in &self.merges[..self.merges_above(tau)] {
            let moved = std::mem::take(&mut members[m.right]);
            members[m.left].extend(moved);
        }
        members
            .into_iter()
            .filter(|c| !c.is_empty())
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect()
    }
}

/// n×n cosine similarities between feature columns, clamped to [-1, 1].
pub fn cosine_matrix(features: &DMatrix<f64>) -> DMatrix<f64> {
    let mut unit = features.clone();
    for mut col in unit.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let mut cos = unit.transpose() * &unit;
    cos.apply(|c| *c = c.clamp(-1.0, 1.0));
    cos
}

/// Run the greedy agglomeration, stopping before the first merge whose
/// similarity is not strictly above `stop`.
fn greedy(cos: &DMatrix<f64>, stop: f64) -> Vec<Merge> {
    let n = cos.nrows();
    // Pairwise similarity sums between clusters, stored row-major n×n.
    let mut sum: Vec<f64> = (0..n * n).map(|k| cos[(k / n, k % n)]).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];

    let sim = |sum: &[f64], size: &[usize], i: usize, j: usize| -> f64 {
        sum[i * n + j] / (size[i] * size[j]) as f64
    };
    // Best partner among active j > i; strict comparison keeps the lowest j on ties.
    let row_best =
        |sum: &[f64], size: &[usize], active: &[bool], i: usize| -> Option<(f64, usize)> {
            let mut best: Option<(f64, usize)> = None;
            for j in (i + 1..n).filter(|&j| active[j]) {
                let s = sim(sum, size, i, j);
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, j));
                }
            }
            best
        };

    let mut best: Vec<Option<(f64, usize)>> =
        (0..n).map(|i| row_best(&sum, &size, &active, i)).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    loop {
        let mut pick: Option<(f64, usize, usize)> = None;
        for (i, b) in best.iter().enumerate() {
            if let Some((s, j)) = *b {
                if pick.is_none_or(|(ps, _, _)| s > ps) {
                    pick = Some((s, i, j));
                }
            }
        }
        let Some((s, i, j)) = pick else { break };
        if s.is_nan() || s <= stop {
            break;
        }
        merges.push(Merge {
            left: i,
            right: j,
            similarity: s,
        });

        active[j] = false;
        best[j] = None;
        for k in 0..n {
            if active[k] && k != i {
                let v = sum[i * n + k] + sum[j * n + k];
                sum[i * n + k] = v;
                sum[k * n + i] = v;
            }
        }
        size[i] += size[j];

        best[i] = row_best(&sum, &size, &active, i);
        for k in 0..j {
            if !active[k] || k == i {
                continue;
            }
            match best[k] {
                Some((_, bj)) if bj == i || bj == j => best[k] = row_best(&sum, &size, &active, k),
                Some((bs, bj)) if k < i => {
                    let s = sim(&sum, &size, k, i);
                    if s > bs || (s == bs && i < bj) {
                        best[k] = Some((s, i));
                    }
                }
                _ => {}
            }
        }
    }
    merges
}

/// Full greedy merge sequence down to a single cluster.
pub fn merge_sequence(features: &FeatureMatrix) -> MergeSequence {
    let cos = cosine_matrix(&features.matrix);
    MergeSequence {
        n: features.num_features(),
        merges: greedy(&cos, f64::NEG_INFINITY),
    }
}

/// Partition the feature columns at threshold `tau`.
pub fn agglomerate(features: &FeatureMatrix, tau: f64) -> Vec<Vec<usize>> {
    let cos = cosine_matrix(&features.matrix);
    let seq = MergeSequence {
        n: features.num_features(),
        merges: greedy(&cos, tau),
    };
    seq.partition(tau)
}

/// Number of clusters at `tau` divided by the number of features.
pub fn cluster_ratio(features: &FeatureMatrix, tau: f64) -> f64 {
    agglomerate(features, tau).len() as f64 / features.num_features() as f64
}

/// Cluster ratio sampled on the uniform threshold grid, as (τ, ratio) pairs.
pub fn cluster_ratio_curve(features: &FeatureMatrix, params: &ClusterParams) -> Vec<(f64, f64)> {
    let seq = merge_sequence(features);
    let n = seq.num_features() as f64;
    params
        .grid()
        .map(|tau| (tau, seq.num_clusters(tau) as f64 / n))
        .collect()
}

/// Area under the cluster-ratio curve over τ ∈ [0, 1] by the trapezoid rule.
pub fn cluster_diversity(features: &FeatureMatrix, params: &ClusterParams) -> f64 {
    let curve = cluster_ratio_curve(features, params);
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}
