use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, Gradients, LabeledData, ToyModel};
use crate::diversity::{cluster_diversity, ClusterParams};
use crate::error::{ensure, invalid, Error, Result};
use crate::weight_features::FeatureMatrix;

/// Backbone update period: every `T`-th head update also updates the
/// backbone. `Never` is the linear-probing limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ControlCycle {
    Every(usize),
    Never,
}

impl ControlCycle {
    /// Whether 1-based step `step` updates the backbone.
    pub fn updates_backbone(self, step: usize) -> bool {
        match self {
            ControlCycle::Every(t) => step.is_multiple_of(t),
            ControlCycle::Never => false,
        }
    }
}

impl FromStr for ControlCycle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(ControlCycle::Never),
            other => match other.parse::<usize>() {
                Ok(t) if t >= 1 => Ok(ControlCycle::Every(t)),
                _ => Err(invalid!(
                    "control cycle must be a positive integer or 'inf', got '{other}'"
                )),
            },
        }
    }
}

impl fmt::Display for ControlCycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlCycle::Every(t) => write!(f, "{t}"),
            ControlCycle::Never => f.write_str("inf"),
        }
    }
}

impl From<ControlCycle> for String {
    fn from(c: ControlCycle) -> Self {
        c.to_string()
    }
}

impl TryFrom<String> for ControlCycle {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionConfig {
    pub control_cycle: ControlCycle,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Log backbone cluster diversity every this many steps.
    pub diversity_every: Option<usize>,
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            !matches!(self.control_cycle, ControlCycle::Every(0)),
            "control cycle must be at least 1"
        );
        ensure!(self.steps >= 1, "steps must be positive");
        ensure!(
            self.lr > 0.0 && self.lr.is_finite(),
            "learning rate must be positive, got {}",
            self.lr
        );
        ensure!(self.batch_size >= 1, "batch size must be positive");
        ensure!(
            self.diversity_every != Some(0),
            "diversity interval must be positive"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub backbone_updated: bool,
    pub cluster_diversity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionRun {
    pub model: ToyModel,
    pub log: Vec<StepLog>,
}

impl InjectionRun {
    pub fn backbone_updates(&self) -> usize {
        self.log.iter().filter(|s| s.backbone_updated).count()
    }
}

/// Minibatch indices drawn from consecutive seeded permutations of the data;
/// a batch may straddle two permutations.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self {
            rng,
            order,
            pos: 0,
            batch_size,
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch_size);
        while out.len() < self.batch_size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn apply(model: &mut ToyModel, g: &Gradients, lr: f64) {
    model.w2.zip_apply(&g.w2, |w, d| *w -= lr * d);
    model.b2.zip_apply(&g.b2, |w, d| *w -= lr * d);
    if let (Some(w1), Some(b1)) = (&g.w1, &g.b1) {
        model.w1.zip_apply(w1, |w, d| *w -= lr * d);
        model.b1.zip_apply(b1, |w, d| *w -= lr * d);
    }
}

/// Cluster diversity of the backbone weight, one feature per hidden unit.
pub fn backbone_cluster_diversity(model: &ToyModel) -> Result<f64> {
    let mut fm = FeatureMatrix::new(super::model::W1_LAYER, "", model.w1.transpose())?;
    fm.drop_zero_columns()?;
    Ok(cluster_diversity(&fm, &ClusterParams::default()))
}

fn check_inputs(model: &ToyModel, data: &LabeledData, cfg: &InjectionConfig) -> Result<()> {
    cfg.validate()?;
    ensure!(data.dim() == model.input_dim(), "input dimension mismatch");
    ensure!(
        data.num_classes == model.classes(),
        "data has {} classes, head has {}",
        data.num_classes,
        model.classes()
    );
    Ok(())
}

fn train(
    model: &ToyModel,
    data: &LabeledData,
    cfg: &InjectionConfig,
    backbone_step: impl Fn(usize) -> bool,
) -> Result<InjectionRun> {
    check_inputs(model, data, cfg)?;
    let mut model = model.clone();
    let mut sampler = BatchSampler::new(data.len(), cfg.batch_size, cfg.seed);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let (x, labels) = data.batch(&sampler.next_batch());
        let update_backbone = backbone_step(step);
        let (loss, accuracy, grads) = cross_entropy(&model, &x, &labels, update_backbone);
        ensure!(loss.is_finite(), "training diverged at step {step}");
        apply(&mut model, &grads, cfg.lr);
        let cluster_diversity = match cfg.diversity_every {
            Some(k) if step % k == 0 => Some(backbone_cluster_diversity(&model)?),
            _ => None,
        };
        log.push(StepLog {
            step,
            loss,
            accuracy,
            backbone_updated: update_backbone,
            cluster_diversity,
        });
    }
    Ok(InjectionRun { model, log })
}

/// Controlled label injection. Every step takes one gradient step on the
/// head; steps whose 1-based index is a multiple of `T` also step the
/// backbone with gradients of the same minibatch loss. Backbone gradients
/// are not computed on other steps and nothing is accumulated.
pub fn controlled_label_injection(
    model: &ToyModel,
    data: &LabeledData,
    cfg: &InjectionConfig,
) -> Result<InjectionRun> {
    let cycle = cfg.control_cycle;
    train(model, data, cfg, |step| cycle.updates_backbone(step))
}

/// Plain fine-tuning: every step updates all parameters. `control_cycle`
/// is ignored.
pub fn joint_finetune(
    model: &ToyModel,
    data: &LabeledData,
    cfg: &InjectionConfig,
) -> Result<InjectionRun> {
    train(model, data, cfg, |_| true)
}

/// Backbone cluster diversity of each snapshot.
pub fn diversity_trace(snapshots: &[ToyModel]) -> Result<Vec<f64>> {
    ensure!(
        !snapshots.is_empty(),
        "diversity trace needs at least one snapshot"
    );
    snapshots.iter().map(backbone_cluster_diversity).collect()
}
