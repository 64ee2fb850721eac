//! Clustering and spectral feature diversity, aggregated per model.

mod cluster;
mod spectral;

use std::str::FromStr;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use cluster::{
    agglomerate, cluster_diversity, cluster_ratio, cluster_ratio_curve, cosine_matrix,
    merge_sequence, Merge, MergeSequence,
};
pub use spectral::{explained_variance_curve, gram_spectrum, spectral_diversity, RANK_TOLERANCE};

use crate::error::{ensure, invalid, Error, Result};
use crate::tensor_io::{Report, TensorBundle};
use crate::transfer_stats::cis;
use crate::weight_features::{extract_all, FeatureMatrix};

/// Threshold grid for the cluster-ratio area. Linkage is fixed to average
/// cosine similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    grid_step: f64,
    intervals: usize,
}

impl ClusterParams {
    pub const DEFAULT_GRID_STEP: f64 = 0.01;

    pub fn new(grid_step: f64) -> Result<Self> {
        ensure!(
            grid_step > 0.0 && grid_step <= 1.0,
            "grid step {grid_step} must lie in (0, 1]"
        );
        let intervals = (1.0 / grid_step).round();
        ensure!(
            (intervals * grid_step - 1.0).abs() < 1e-9,
            "grid step {grid_step} does not divide [0, 1] into whole intervals"
        );
        Ok(Self {
            grid_step,
            intervals: intervals as usize,
        })
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// Grid points 0, step, ..., 1 (inclusive, exactly 1 at the end).
    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.intervals;
        (0..=n).map(move |k| k as f64 / n as f64)
    }
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self::new(Self::DEFAULT_GRID_STEP).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Cluster,
    Spectral,
    #[default]
    Both,
}

impl Measure {
    pub fn cluster(self) -> bool {
        matches!(self, Measure::Cluster | Measure::Both)
    }

    pub fn spectral(self) -> bool {
        matches!(self, Measure::Spectral | Measure::Both)
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(Measure::Cluster),
            "spectral" => Ok(Measure::Spectral),
            "both" => Ok(Measure::Both),
            other => Err(invalid!(
                "unknown measure '{other}' (expected cluster, spectral or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDiversity {
    pub layer_name: String,
    pub sub_unit: String,
    pub num_features: usize,
    pub zero_dropped: usize,
    pub cluster_div: Option<f64>,
    pub spectral_div: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub model_id: String,
    pub upstream_accuracy: Option<f64>,
    pub grid_step: f64,
    pub per_unit: Vec<UnitDiversity>,
    pub cluster_avg: Option<f64>,
    pub spectral_avg: Option<f64>,
    pub cis_cluster: Option<f64>,
    pub cis_spectral: Option<f64>,
}

/// Tolerance for the stored averages and products against recomputation.
const CONSISTENCY_TOL: f64 = 1e-12;

fn check_average(
    name: &str,
    values: impl Iterator<Item = Option<f64>>,
    avg: Option<f64>,
) -> Result<()> {
    let values: Option<Vec<f64>> = values.collect();
    match (values, avg) {
        (Some(v), Some(a)) => {
            ensure!(
                !v.is_empty(),
                "{name}: populated average with an empty per-unit list"
            );
            ensure!(
                v.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)),
                "{name}: per-unit value outside [0, 1]"
            );
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            ensure!(
                (mean - a).abs() <= CONSISTENCY_TOL,
                "{name}: average {a} does not match per-unit mean {mean}"
            );
            Ok(())
        }
        (_, None) => Ok(()),
        (None, Some(_)) => Err(invalid!(
            "{name}: average present but some units lack a value"
        )),
    }
}

fn check_cis(name: &str, acc: Option<f64>, avg: Option<f64>, cis_value: Option<f64>) -> Result<()> {
    match (acc, avg, cis_value) {
        (Some(a), Some(d), Some(c)) => {
            ensure!(
                (a * d - c).abs() <= CONSISTENCY_TOL,
                "{name}: {c} is not accuracy {a} × diversity {d}"
            );
            Ok(())
        }
        (Some(_), Some(_), None) => Err(invalid!("{name} missing although accuracy is present")),
        (_, _, None) => Ok(()),
        (_, _, Some(_)) => Err(invalid!("{name} present without accuracy and diversity")),
    }
}

impl Report for DiversityReport {
    fn validate(&self) -> Result<()> {
        ensure!(
            !self.per_unit.is_empty(),
            "diversity report for '{}' has no per-unit entries",
            self.model_id
        );
        check_average(
            "cluster_avg",
            self.per_unit.iter().map(|u| u.cluster_div),
            self.cluster_avg,
        )?;
        check_average(
            "spectral_avg",
            self.per_unit.iter().map(|u| u.spectral_div),
            self.spectral_avg,
        )?;
        check_cis(
            "cis_cluster",
            self.upstream_accuracy,
            self.cluster_avg,
            self.cis_cluster,
        )?;
        check_cis(
            "cis_spectral",
            self.upstream_accuracy,
            self.spectral_avg,
            self.cis_spectral,
        )?;
        Ok(())
    }
}

fn unit_diversity(
    unit: &FeatureMatrix,
    params: &ClusterParams,
    measure: Measure,
) -> Result<UnitDiversity> {
    Ok(UnitDiversity {
        layer_name: unit.layer_name.clone(),
        sub_unit: unit.sub_unit.clone(),
        num_features: unit.num_features(),
        zero_dropped: unit.zero_dropped,
        cluster_div: measure.cluster().then(|| cluster_diversity(unit, params)),
        spectral_div: if measure.spectral() {
            Some(spectral_diversity(unit)?)
        } else {
            None
        },
    })
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| match v {
        Some(v) => (s + v, c + 1),
        None => (s, c),
    });
    (count > 0).then(|| sum / count as f64)
}

/// Per-unit and model-average diversity of every feature-bearing layer.
///
/// Each attention head projection counts as its own unit; the model average
/// is the unweighted mean over units, reduced in manifest order.
pub fn model_diversity(
    bundle: &TensorBundle,
    params: &ClusterParams,
    exclude: Option<&Regex>,
    measure: Measure,
) -> Result<DiversityReport> {
    let units = extract_all(bundle, exclude)?;
    ensure!(
        !units.is_empty(),
        "bundle '{}' has no feature-bearing layers left to analyse",
        bundle.model_id()
    );
    let per_unit = units
        .par_iter()
        .map(|u| unit_diversity(u, params, measure))
        .collect::<Result<Vec<_>>>()?;

    let cluster_avg = mean(per_unit.iter().map(|u| u.cluster_div));
    let spectral_avg = mean(per_unit.iter().map(|u| u.spectral_div));
    let acc = bundle.upstream_accuracy();
    let with_acc = |avg: Option<f64>| match (acc, avg) {
        (Some(a), Some(d)) => cis(a, d).map(Some),
        _ => Ok(None),
    };
    Ok(DiversityReport {
        model_id: bundle.model_id().to_string(),
        upstream_accuracy: acc,
        grid_step: params.grid_step(),
        cis_cluster: with_acc(cluster_avg)?,
        cis_spectral: with_acc(spectral_avg)?,
        per_unit,
        cluster_avg,
        spectral_avg,
    })
}
