use std::path::{Path, PathBuf};

use divscan_core::diversity::{model_diversity, ClusterParams};
use divscan_core::gbdt::{importance_table, GbdtConfig};
use divscan_core::repr_metrics::{
    cka_abstraction_score, cka_linear, cka_matrix, cka_minibatch, class_metrics, ActivationMatrix,
};
use divscan_core::tensor_io::{
    load_accuracy_table, load_bundle, load_embeddings, write_bundle, write_report, LayerKind,
    Report, TensorBundle,
};
use divscan_core::toytrain::{cross_entropy, PretrainConfig, ToyModel, ToyRun, ToyRunConfig};
use divscan_core::transfer_stats::{correlate, transfer_scores};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::args::{
    CkaArgs, CkaStagesArgs, ClassMetricsArgs, Cli, Command, CorrelateArgs, DiversityArgs,
    ImportanceArgs, ToytrainArgs, TransferArgs,
};
use crate::failure::Failure;
use crate::manifest::RunManifest;
use crate::tables::{parse_column_spec, read_column, read_feature_records};

/// Run the selected command; returns the report path.
pub fn run(cli: &Cli) -> Result<PathBuf, Failure> {
    let wall = cli.record_wall_time;
    match &cli.command {
        Command::Diversity(a) => diversity(a, RunManifest::new("diversity", a, wall)),
        Command::Transfer(a) => transfer(a, RunManifest::new("transfer", a, wall)),
        Command::Correlate(a) => correlate_columns(a, RunManifest::new("correlate", a, wall)),
        Command::Cka(a) => cka(a, RunManifest::new("cka", a, wall)),
        Command::CkaStages(a) => cka_stages(a, RunManifest::new("cka-stages", a, wall)),
        Command::ClassMetrics(a) => {
            class_metrics_cmd(a, RunManifest::new("class-metrics", a, wall))
        }
        Command::Importance(a) => importance(a, RunManifest::new("importance", a, wall)),
        Command::Toytrain(a) => toytrain(a, RunManifest::new("toytrain", a, wall)),
    }
}

fn finish<R: Report>(report: &R, out: &Path, manifest: RunManifest) -> Result<PathBuf, Failure> {
    write_report(report, out)?;
    manifest.write_for(out)?;
    Ok(out.to_path_buf())
}

fn diversity(a: &DiversityArgs, mut manifest: RunManifest) -> Result<PathBuf, Failure> {
    manifest.input("bundle", &a.bundle)?;
    let params = ClusterParams::new(a.grid_step)?;
    let exclude = a
        .exclude
        .as_deref()
        .map(Regex::new)
        .transpose()
        .map_err(|e| Failure::Invalid(format!("bad --exclude pattern: {e}")))?;
    let mut bundle = load_bundle(&a.bundle)?;
    if let Some(acc) = a.accuracy {
        bundle = TensorBundle::new(bundle.model_id(), bundle.layers().to_vec(), Some(acc))?;
    }
    let report = model_diversity(&bundle, &params, exclude.as_ref(), a.measure)?;
    finish(&report, &a.out, manifest)
}

fn transfer(a: &TransferArgs, mut manifest: RunManifest) -> Result<PathBuf, Failure> {
    manifest.input("table", &a.table)?;
    let table = load_accuracy_table(&a.table, a.clamp_eps)?;
    finish(&transfer_scores(&table)?, &a.out, manifest)
}

fn correlate_columns(a: &CorrelateArgs, mut manifest: RunManifest) -> Result<PathBuf, Failure> {
    let (x_path, x_col) = parse_column_spec(&a.x)?;
    let (y_path, y_col) = parse_column_spec(&a.y)?;
    manifest.input("x", &x_path)?;
    manifest.input("y", &y_path)?;
    let x = read_column(&x_path, &x_col)?;
    let y = read_column(&y_path, &y_col)?;
    if x.len() != y.len() {
        return Err(Failure::Invalid(format!(
            "column lengths differ: {} has {} values, {} has {}",
            a.x,
            x.len(),
            a.y,
            y.len()
        )));
    }
    finish(&correlate(&x, &y)?, &a.out, manifest)
}

fn activation_layer(
    bundle: &TensorBundle,
    name: Option<&str>,
) -> Result<ActivationMatrix, Failure> {
    let layer = match name {
        Some(name) => bundle.layer(name).ok_or_else(|| {
            Failure::Invalid(format!(
                "bundle '{}' has no layer '{name}'",
                bundle.model_id()
            ))
        })?,
        None => {
            let mut acts = bundle
                .layers()
                .iter()
                .filter(|l| l.kind() == LayerKind::Activation);
            match (acts.next(), acts.next()) {
                (Some(l), None) => l,
                (None, _) => {
                    return Err(Failure::Invalid(format!(
                        "bundle '{}' has no activation layer",
                        bundle.model_id()
                    )))
                }
                (Some(_), Some(_)) => {
                    return Err(Failure::Invalid(format!(
                        "bundle '{}' has several activation layers; pick one by name",
                        bundle.model_id()
                    )))
                }
            }
        }
    };
    Ok(ActivationMatrix::from_layer(layer)?)
}

fn split_rows(m: &ActivationMatrix, size: usize) -> Result<Vec<ActivationMatrix>, Failure> {
    let n = m.num_examples();
    (0..n / size)
        .map(|b| {
            Ok(ActivationMatrix::new(
                m.matrix().rows(b * size, size).into_owned(),
            )?)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CkaReport {
    pub x_layer: Option<String>,
    pub y_layer: Option<String>,
    pub n_examples: usize,
    pub minibatch: Option<usize>,
    pub n_batches: usize,
    pub cka: f64,
}

impl Report for CkaReport {
    fn validate(&self) -> divscan_core::Result<()> {
        // Minibatch estimates are built from unbiased HSIC and may leave [0, 1].
        let in_range = self.minibatch.is_some() || (-1e-12..=1.0 + 1e-12).contains(&self.cka);
        if !self.cka.is_finite() || !in_range {
            return Err(divscan_core::Error::Invalid(format!(
                "CKA value {} is out of range",
                self.cka
            )));
        }
        Ok(())
    }
}

fn cka(a: &CkaArgs, mut manifest: RunManifest) -> Result<PathBuf, Failure> {
    manifest.input("x", &a.x)?;
    manifest.input("y", &a.y)?;
    let x = activation_layer(&load_bundle(&a.x)?, a.x_layer.as_deref())?;
    let y = activation_layer(&load_bundle(&a.y)?, a.y_layer.as_deref())?;
    if x.num_examples() != y.num_examples() {
        return Err(Failure::Invalid(format!(
            "activation row counts differ: {} vs {}",
            x.num_examples(),
            y.num_examples()
        )));
    }
    let (value, n_batches) = match a.minibatch {
        None => (cka_linear(&x, &y)?, 1),
        Some(size) => {
            if size < 4 || size > x.num_examples() {
                return Err(Failure::Invalid(format!(
                    "minibatch size must be between 4 and {}, got {size}",
                    x.num_examples()
                )));
            }
            let xb = split_rows(&x, size)?;
            let yb = split_rows(&y, size)?;
            (cka_minibatch(&xb, &yb)?, xb.len())
        }
    };
    let report = CkaReport {
        x_layer: a.x_layer.clone(),
        y_layer: a.y_layer.clone(),
        n_examples: x.num_examples(),
        minibatch: a.minibatch,
        n_batches,
        cka: value,
    };
    finish(&report, &a.out, manifest)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CkaStagesReport {
    pub model_id: String,
    pub stages: Vec<String>,
    /// Row-major stage-by-stage CKA matrix.
    pub matrix: Vec<Vec<f64>>,
    pub abstraction_score: f64,
}

impl Report for CkaStagesReport {
    fn validate(&self) -> divscan_core::Result<()> {
        let s = self.stages.len();
        if self.matrix.len() != s || self.matrix.iter().any(|r| r.len() != s) {
            return Err(divscan_core::Error::Invalid(
                "CKA matrix does not match stage count".into(),
            ));
        }
        if !self.abstraction_score.is_finite() {
            return Err(divscan_core::Error::Invalid(
                "abstraction score is not finite".into(),
            ));
        }
        Ok(())
    }
}

fn cka_stages(a: &CkaStagesArgs, mut manifest: RunManifest) -> Result<PathBuf, Failure> {
    manifest.input("bundle", &a.bundle)?;
    let bundle = load_bundle(&a.bundle)?;
    let layers: Vec<_> = bundle
        .layers()
        .iter()
        .filter(|l| l.kind() == LayerKind::Activation)
        .collect();
    let stages = layers
        .iter()
        .map(|l| ActivationMatrix::from_layer(l))
        .collect::<divscan_core::Result<Vec<_>>>()?;
    let score = cka_abstraction_score(&stages)?;
    let m = cka_matrix(&stages)?;
    let report = CkaStagesReport {
        model_id: bundle.model_id().to_owned(),
        stages: layers.iter().map(|l| l.name().to_owned()).collect(),
        matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        abstraction_score: score,
    };
    finish(&report, &a.out, manifest)
}

fn class_metrics_cmd(a: &ClassMetricsArgs, mut manifest: RunManifest) -> Result<PathBuf, Failure> {
    manifest.input("embeddings", &a.embeddings)?;
    let emb = load_embeddings(&a.embeddings)?;
    finish(&class_metrics(&emb)?, &a.out, manifest)
}

fn importance(a: &ImportanceArgs, mut manifest: RunManifest) -> Result<PathBuf, Failure> {
    manifest.input("table", &a.table)?;
    let config = GbdtConfig {
        n_trees: a.trees,
        max_depth: a.depth,
        learning_rate: a.lr,
        min_samples_leaf: a.min_leaf,
        seed: a.seed,
    };
    config.validate()?;
    let records = read_feature_records(&a.table, &a.target)?;
    finish(&importance_table(&records, &config)?, &a.out, manifest)
}

fn sibling_dir(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}_{suffix}"))
}

fn toytrain(a: &ToytrainArgs, manifest: RunManifest) -> Result<PathBuf, Failure> {
    let cfg = ToyRunConfig {
        classes: a.classes,
        dim: a.dim,
        hidden: a.hidden,
        per_class: a.per_class,
        sigma: a.sigma,
        separation: a.separation,
        seed: a.seed,
        pretrain: PretrainConfig {
            epochs: a.pretrain_epochs,
            lr: a.pretrain_lr,
            batch_size: a.pretrain_batch,
            noise_sigma: a.noise_sigma,
            temperature: a.temperature,
            seed: 0,
        },
        centroid_init: a.centroid_init,
        control_cycle: a.control_cycle,
        steps: a.steps,
        lr: a.lr,
        batch_size: a.batch,
        diversity_every: a.diversity_every,
        joint: a.joint_reference,
    };
    let run = ToyRun::execute(&cfg)?;

    let mut writer = csv::Writer::from_path(&a.out)
        .map_err(|e| Failure::Io(format!("{}: {e}", a.out.display())))?;
    for step in &run.result.log {
        writer.serialize(step)?;
    }
    writer
        .flush()
        .map_err(|e| Failure::Io(format!("{}: {e}", a.out.display())))?;

    let data = &run.task.data;
    let full_accuracy = |m: &ToyModel| cross_entropy(m, &data.x, &data.labels, false).1;
    let initial = run
        .initial
        .to_bundle("toy-initial", Some(full_accuracy(&run.initial)))?;
    let trained = run
        .result
        .model
        .to_bundle("toy-final", Some(full_accuracy(&run.result.model)))?;
    write_bundle(&initial, sibling_dir(&a.out, "initial"))?;
    write_bundle(&trained, sibling_dir(&a.out, "model"))?;

    manifest.write_for(&a.out)?;
    Ok(a.out.clone())
}
