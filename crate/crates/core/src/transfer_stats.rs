//! Transferability scoring from accuracy tables, correlation statistics,
//! and the Calibrated Imagenet Score.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Result};
use crate::tensor_io::{AccuracyTable, Report};

/// Natural log-odds of a probability strictly inside (0, 1).
pub fn logit(p: f64) -> Result<f64> {
    ensure!(
        p > 0.0 && p < 1.0,
        "logit needs p in (0, 1), got {p}; clamp accuracies first"
    );
    Ok((p / (1.0 - p)).ln())
}

/// Calibrated Imagenet Score: upstream accuracy × feature diversity.
pub fn cis(accuracy: f64, diversity: f64) -> Result<f64> {
    ensure!(
        (0.0..=1.0).contains(&accuracy),
        "accuracy {accuracy} is outside [0, 1]"
    );
    ensure!(
        (0.0..=1.0).contains(&diversity),
        "diversity {diversity} is outside [0, 1]"
    );
    Ok(accuracy * diversity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model_id: String,
    pub mean_adjusted: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferScores {
    pub datasets: Vec<String>,
    pub per_model: Vec<ModelScore>,
    /// Adjusted logit accuracies, models × datasets.
    pub adjusted: Vec<Vec<f64>>,
}

impl Report for TransferScores {
    fn validate(&self) -> Result<()> {
        ensure!(
            self.per_model.len() >= 2,
            "transfer scores need at least 2 models"
        );
        ensure!(
            self.adjusted.len() == self.per_model.len(),
            "adjusted grid row count mismatch"
        );
        for s in &self.per_model {
            ensure!(
                s.mean_adjusted.is_finite() && s.stderr.is_finite() && s.stderr >= 0.0,
                "model '{}' has a non-finite score",
                s.model_id
            );
        }
        for d in 0..self.datasets.len() {
            let sum: f64 = self.adjusted.iter().map(|row| row[d]).sum();
            ensure!(
                sum.abs() <= 1e-9,
                "adjusted accuracies for '{}' sum to {sum}, not 0",
                self.datasets[d]
            );
        }
        Ok(())
    }
}

/// Logit-transform, centre per dataset across models, then summarise each
/// model by its mean adjusted accuracy and its bias-corrected standard error.
pub fn transfer_scores(table: &AccuracyTable) -> Result<TransferScores> {
    let m = table.models().len();
    let d = table.datasets().len();
    ensure!(m >= 2, "transfer scores need at least 2 models, got {m}");

    let y = table
        .rows()
        .iter()
        .map(|row| row.iter().map(|&p| logit(p)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let dataset_means: Vec<f64> = (0..d)
        .map(|j| y.iter().map(|row| row[j]).sum::<f64>() / m as f64)
        .collect();
    let adjusted: Vec<Vec<f64>> = y
        .iter()
        .map(|row| {
            row.iter()
                .zip(&dataset_means)
                .map(|(v, mu)| v - mu)
                .collect()
        })
        .collect();

    let correction = m as f64 / (m as f64 - 1.0);
    let per_model = table
        .models()
        .iter()
        .zip(&adjusted)
        .map(|(id, row)| {
            let mean = row.iter().sum::<f64>() / d as f64;
            let stderr = if d > 1 {
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d as f64 - 1.0);
                var.sqrt() / (d as f64).sqrt() * correction
            } else {
                0.0
            };
            ModelScore {
                model_id: id.clone(),
                mean_adjusted: mean,
                stderr,
            }
        })
        .collect();
    Ok(TransferScores {
        datasets: table.datasets().to_vec(),
        per_model,
        adjusted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub pearson: f64,
    pub spearman: f64,
    pub kendall_tau_b: f64,
    pub r_squared: f64,
}

impl Report for CorrelationReport {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pearson", self.pearson),
            ("spearman", self.spearman),
            ("kendall_tau_b", self.kendall_tau_b),
        ] {
            ensure!((-1.0..=1.0).contains(&v), "{name} = {v} is outside [-1, 1]");
        }
        ensure!(
            (0.0..=1.0 + 1e-12).contains(&self.r_squared),
            "r_squared = {} is outside [0, 1]",
            self.r_squared
        );
        Ok(())
    }
}

fn check_pair(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    ensure!(
        x.len() == y.len(),
        "length mismatch: {} vs {}",
        x.len(),
        y.len()
    );
    ensure!(
        x.len() >= min_len,
        "need at least {min_len} points, got {}",
        x.len()
    );
    ensure!(
        x.iter().chain(y).all(|v| v.is_finite()),
        "correlation inputs must be finite"
    );
    Ok(())
}

fn centred_moments(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (mx, my, sxx, syy, sxy)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let (_, _, sxx, syy, sxy) = centred_moments(x, y);
    ensure!(
        sxx > 0.0 && syy > 0.0,
        "Pearson correlation is undefined for constant input"
    );
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

fn tie_pairs<T: PartialEq>(sorted: &[T]) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Count strict inversions while merge-sorting `v` in place.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as i64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b with tie correction, in O(n log n).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.len() as i64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = n * (n - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tie_pairs(&xs);
    let n3 = tie_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut scratch = Vec::with_capacity(ys.len());
    let discordant = count_inversions(&mut ys, &mut scratch);
    let n2 = tie_pairs(&ys);

    ensure!(
        n0 > n1 && n0 > n2,
        "Kendall tau-b is undefined for constant input"
    );
    let score = n0 - n1 - n2 + n3 - 2 * discordant;
    Ok(tau_b_from_counts(score, n0, n1, n2))
}

/// Final tau-b ratio from integer pair counts: `score` is concordant minus
/// discordant, `n1`/`n2` are tied pairs in x and y.
pub fn tau_b_from_counts(score: i64, n0: i64, n1: i64, n2: i64) -> f64 {
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    (score as f64 / denom).clamp(-1.0, 1.0)
}

/// Coefficient of determination of the least-squares line of y on x.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let (mx, my, sxx, syy, sxy) = centred_moments(x, y);
    ensure!(sxx > 0.0, "regression on a constant predictor is undefined");
    ensure!(syy > 0.0, "R² is undefined for a constant response");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok((1.0 - ss_res / syy).max(0.0))
}

pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationReport> {
    check_pair(x, y, 3)?;
    let report = CorrelationReport {
        n: x.len(),
        pearson: pearson(x, y)?,
        spearman: spearman(x, y)?,
        kendall_tau_b: kendall_tau_b(x, y)?,
        r_squared: r_squared(x, y)?,
    };
    if !report.r_squared.is_finite() {
        return Err(invalid!("non-finite R²"));
    }
    Ok(report)
}
