//! Squared-error gradient boosting with exact greedy regression trees and
//! split-gain feature importance.
//!
//! Every split point between distinct sorted feature values is evaluated.
//! Gains are the reduction in summed squared error of the node's residuals;
//! ties go to the lowest feature index, then the lowest threshold.

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Result};
use crate::tensor_io::Report;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Recorded for reproducibility. Training has no random component:
    /// no row or column subsampling, and split ties are broken by index.
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 6,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_trees >= 1, "n_trees must be positive");
        ensure!(self.max_depth >= 1, "max_depth must be positive");
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning rate must be positive, got {}",
            self.learning_rate
        );
        ensure!(
            self.min_samples_leaf >= 1,
            "min_samples_leaf must be positive"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn num_splits(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    fn add_gains(&self, totals: &mut [f64]) {
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = *node {
                totals[feature] += gain;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    base: f64,
    learning_rate: f64,
    n_features: usize,
    trees: Vec<Tree>,
    train_mse: Vec<f64>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct TreeBuilder<'a> {
    x: &'a DMatrix<f64>,
    residual: &'a [f64],
    cfg: &'a GbdtConfig,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn best_split(&self, rows: &[usize]) -> Option<SplitChoice> {
        let n = rows.len();
        if n < 2 * self.cfg.min_samples_leaf {
            return None;
        }
        let first = self.residual[rows[0]];
        if rows.iter().all(|&r| self.residual[r] == first) {
            return None;
        }
        let total: f64 = rows.iter().map(|&r| self.residual[r]).sum();
        let sum_sq: f64 = rows.iter().map(|&r| self.residual[r].powi(2)).sum();
        let base_score = total * total / n as f64;
        let min_gain = 1e-12 * sum_sq;

        let mut best: Option<SplitChoice> = None;
        let mut order = rows.to_vec();
        for f in 0..self.x.ncols() {
            let col = self.x.column(f);
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.residual[order[i]];
                let (lo, hi) = (col[order[i]], col[order[i + 1]]);
                let n_left = i + 1;
                if lo == hi
                    || n_left < self.cfg.min_samples_leaf
                    || n - n_left < self.cfg.min_samples_leaf
                {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (n - n_left) as f64
                    - base_score;
                if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| self.residual[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });
        if depth >= self.cfg.max_depth {
            return id;
        }
        let Some(split) = self.best_split(&rows) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.x[(r, split.feature)] <= split.threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            gain: split.gain,
            left,
            right,
        };
        id
    }
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / target.len() as f64
}

/// Fit a boosted ensemble on an n×f feature matrix.
pub fn fit(features: &DMatrix<f64>, target: &[f64], config: &GbdtConfig) -> Result<GbdtModel> {
    config.validate()?;
    let n = features.nrows();
    ensure!(n >= 2, "boosting needs at least 2 samples, got {n}");
    ensure!(features.ncols() >= 1, "boosting needs at least 1 feature");
    ensure!(target.len() == n, "{} targets for {n} rows", target.len());
    ensure!(
        features.iter().chain(target).all(|v| v.is_finite()),
        "boosting inputs must be finite"
    );

    let base = target.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut train_mse = vec![mse(&pred, target)];
    let rows: Vec<Vec<f64>> = features
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();

    for _ in 0..config.n_trees {
        for i in 0..n {
            residual[i] = target[i] - pred[i];
        }
        let mut builder = TreeBuilder {
            x: features,
            residual: &residual,
            cfg: config,
            nodes: Vec::new(),
        };
        builder.grow((0..n).collect(), 0);
        let tree = Tree {
            nodes: builder.nodes,
        };
        for (p, row) in pred.iter_mut().zip(&rows) {
            *p += config.learning_rate * tree.predict(row);
        }
        train_mse.push(mse(&pred, target));
        trees.push(tree);
    }
    Ok(GbdtModel {
        base,
        learning_rate: config.learning_rate,
        n_features: features.ncols(),
        trees,
        train_mse,
    })
}

impl GbdtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<f64> {
        features
            .row_iter()
            .map(|r| self.predict_row(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Training MSE before the first tree and after each round.
    pub fn train_mse(&self) -> &[f64] {
        &self.train_mse
    }

    /// Split gains summed per feature over all trees, normalised to sum to 1.
    /// All zero when no tree ever split.
    pub fn importance(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.n_features];
        for tree in &self.trees {
            tree.add_gains(&mut totals);
        }
        let sum: f64 = totals.iter().sum();
        if sum > 0.0 {
            totals.iter_mut().for_each(|v| *v /= sum);
        }
        totals
    }
}

/// Named per-feature gain shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub features: Vec<String>,
    pub shares: Vec<f64>,
    pub config: GbdtConfig,
    pub n_samples: usize,
    pub final_train_mse: f64,
}

impl ImportanceVector {
    pub fn share(&self, name: &str) -> Option<f64> {
        self.features
            .iter()
            .position(|f| f == name)
            .map(|i| self.shares[i])
    }
}

impl Report for ImportanceVector {
    fn validate(&self) -> Result<()> {
        ensure!(
            self.features.len() == self.shares.len(),
            "feature/share length mismatch"
        );
        ensure!(
            self.shares.iter().all(|s| s.is_finite() && *s >= 0.0),
            "importance shares must be finite and non-negative"
        );
        let sum: f64 = self.shares.iter().sum();
        ensure!(
            sum == 0.0 || (sum - 1.0).abs() <= 1e-9,
            "importance shares sum to {sum}"
        );
        Ok(())
    }
}

/// One analysed model: named predictor values and its transfer score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub features: IndexMap<String, f64>,
    pub transfer: f64,
}

/// Fit on a list of records and report importance per feature name, in the
/// key order of the first record.
pub fn importance_table(
    records: &[FeatureRecord],
    config: &GbdtConfig,
) -> Result<ImportanceVector> {
    let first = records
        .first()
        .ok_or_else(|| invalid!("no records to fit"))?;
    let names: Vec<String> = first.features.keys().cloned().collect();
    ensure!(!names.is_empty(), "records carry no features");
    let mut data = Vec::with_capacity(records.len() * names.len());
    for (i, rec) in records.iter().enumerate() {
        ensure!(
            rec.features.len() == names.len(),
            "record {i} has {} features, expected {}",
            rec.features.len(),
            names.len()
        );
        for name in &names {
            let v = rec
                .features
                .get(name)
                .ok_or_else(|| invalid!("record {i} is missing feature '{name}'"))?;
            data.push(*v);
        }
    }
    let x = DMatrix::from_row_slice(records.len(), names.len(), &data);
    let y: Vec<f64> = records.iter().map(|r| r.transfer).collect();
    let model = fit(&x, &y, config)?;
    Ok(ImportanceVector {
        features: names,
        shares: model.importance(),
        config: *config,
        n_samples: records.len(),
        final_train_mse: *model.train_mse().last().unwrap(),
    })
}
