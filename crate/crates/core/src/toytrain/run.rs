use super::{
    centroid_init_head, controlled_label_injection, joint_finetune,
    pretrain_instance_discrimination, ControlCycle, InjectionConfig, InjectionRun, PretrainConfig,
    SyntheticTask, ToyModel,
};
use crate::error::{ensure, Result};

/// Everything needed to reproduce one toy run from a single seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyRunConfig {
    pub classes: usize,
    pub dim: usize,
    pub hidden: usize,
    pub per_class: usize,
    pub sigma: f64,
    pub separation: f64,
    pub seed: u64,
    pub pretrain: PretrainConfig,
    pub centroid_init: bool,
    pub control_cycle: ControlCycle,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub diversity_every: Option<usize>,
    /// Ignore the control cycle and update everything every step.
    pub joint: bool,
}

impl Default for ToyRunConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 8,
            hidden: 16,
            per_class: 64,
            sigma: 0.6,
            separation: 2.0,
            seed: 0,
            pretrain: PretrainConfig::default(),
            centroid_init: false,
            control_cycle: ControlCycle::Every(1),
            steps: 200,
            lr: 0.1,
            batch_size: 32,
            diversity_every: None,
            joint: false,
        }
    }
}

// Sub-seeds so the task, init, pretraining and batches use unrelated streams.
const TASK_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const PRETRAIN_STREAM: u64 = 2;
const BATCH_STREAM: u64 = 3;

fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(4).wrapping_add(stream)
}

impl ToyRunConfig {
    pub fn injection(&self) -> InjectionConfig {
        InjectionConfig {
            control_cycle: self.control_cycle,
            steps: self.steps,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: sub_seed(self.seed, BATCH_STREAM),
            diversity_every: self.diversity_every,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.classes >= 2, "need at least 2 classes");
        ensure!(self.hidden >= 2, "need at least 2 hidden units");
        ensure!(
            self.dim >= 1 && self.per_class >= 1,
            "need positive dimension and samples per class"
        );
        if self.pretrain.epochs > 0 {
            self.pretrain.validate()?;
        }
        self.injection().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRun {
    pub task: SyntheticTask,
    /// Model entering label injection (after pretraining and head init).
    pub initial: ToyModel,
    pub result: InjectionRun,
}

impl ToyRun {
    /// Build the task and the model that label injection starts from.
    pub fn prepare(cfg: &ToyRunConfig) -> Result<(SyntheticTask, ToyModel)> {
        cfg.validate()?;
        let task = SyntheticTask::generate(
            cfg.classes,
            cfg.dim,
            cfg.per_class,
            cfg.sigma,
            cfg.separation,
            sub_seed(cfg.seed, TASK_STREAM),
        )?;
        let mut model = ToyModel::init(
            cfg.dim,
            cfg.hidden,
            cfg.classes,
            sub_seed(cfg.seed, INIT_STREAM),
        )?;
        let pre = PretrainConfig {
            seed: sub_seed(cfg.seed, PRETRAIN_STREAM),
            ..cfg.pretrain
        };
        model = pretrain_instance_discrimination(&model, &task.data, &pre)?;
        if cfg.centroid_init {
            model = centroid_init_head(&model, &task.data)?;
        }
        Ok((task, model))
    }

    pub fn execute(cfg: &ToyRunConfig) -> Result<Self> {
        let (task, initial) = Self::prepare(cfg)?;
        let inj = cfg.injection();
        let result = if cfg.joint {
            joint_finetune(&initial, &task.data, &inj)?
        } else {
            controlled_label_injection(&initial, &task.data, &inj)?
        };
        Ok(Self {
            task,
            initial,
            result,
        })
    }
}
