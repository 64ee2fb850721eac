use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use divscan_core::diversity::Measure;
use divscan_core::toytrain::ControlCycle;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "divscan",
    version,
    about = "Feature diversity and transferability analysis"
)]
pub struct Cli {
    /// Record elapsed wall time in the run manifest (breaks byte-identical reruns).
    #[arg(long, global = true)]
    pub record_wall_time: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-layer and model-average feature diversity of a weight bundle.
    Diversity(DiversityArgs),
    /// Mean logit-adjusted transfer accuracy per model.
    Transfer(TransferArgs),
    /// Pearson, Spearman, Kendall tau-b and R² between two CSV columns.
    Correlate(CorrelateArgs),
    /// Linear CKA between two activation matrices.
    Cka(CkaArgs),
    /// Pairwise CKA across the activation stages of one bundle.
    CkaStages(CkaStagesArgs),
    /// Intra-class variation, inter-class separation and mean silhouette.
    ClassMetrics(ClassMetricsArgs),
    /// Gradient-boosted-tree feature importance for a target column.
    Importance(ImportanceArgs),
    /// Toy pretraining plus controlled label injection on synthetic data.
    Toytrain(ToytrainArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DiversityArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value = "both")]
    pub measure: Measure,
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    /// Regex; layers whose name matches are skipped.
    #[arg(long)]
    pub exclude: Option<String>,
    /// Upstream accuracy, overriding the one in the bundle manifest.
    #[arg(long)]
    pub accuracy: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TransferArgs {
    /// CSV: model_id, then one accuracy column per dataset.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value_t = divscan_core::tensor_io::DEFAULT_CLAMP_EPS)]
    pub clamp_eps: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CorrelateArgs {
    /// `<csv>:<column>`
    #[arg(long)]
    pub x: String,
    /// `<csv>:<column>`
    #[arg(long)]
    pub y: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CkaArgs {
    /// Bundle holding an `activation` layer.
    #[arg(long)]
    pub x: PathBuf,
    /// Layer to read from --x; required when it has several activation layers.
    #[arg(long)]
    pub x_layer: Option<String>,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub y_layer: Option<String>,
    /// Split rows into consecutive batches of this size and use minibatch CKA.
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CkaStagesArgs {
    /// Bundle whose `activation` layers, in manifest order, are the stages.
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassMetricsArgs {
    /// CSV with header `label,e0,e1,...`.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportanceArgs {
    /// CSV of numeric predictor columns plus the target; `model_id` is ignored.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value = "transfer")]
    pub target: String,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ToytrainArgs {
    /// Backbone update period: a positive integer, or `inf` for linear probing.
    #[arg(long, default_value = "1")]
    pub control_cycle: ControlCycle,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub pretrain_epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub pretrain_lr: f64,
    #[arg(long, default_value_t = 32)]
    pub pretrain_batch: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub temperature: f64,
    /// Initialise the head from class-mean embeddings.
    #[arg(long)]
    pub centroid_init: bool,
    /// Update backbone and head on every step, ignoring --control-cycle.
    #[arg(long)]
    pub joint_reference: bool,
    /// Log backbone cluster diversity every this many steps.
    #[arg(long)]
    pub diversity_every: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 64)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.6)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    /// Per-step log; the initial and final models are written to
    /// `<stem>_initial/` and `<stem>_model/` next to it.
    #[arg(long)]
    pub out: PathBuf,
}
