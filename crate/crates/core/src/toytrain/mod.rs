//! Desk-scale two-stage training: contrastive instance-discrimination
//! pretraining of a tanh backbone, centroid initialisation of the linear
//! head, then controlled label injection where the backbone is updated only
//! once every `T` head updates.

mod injection;
mod model;
mod pretrain;
mod run;
mod task;

pub use injection::{
    controlled_label_injection, diversity_trace, joint_finetune, BatchSampler, ControlCycle,
    InjectionConfig, InjectionRun, StepLog,
};
pub use model::{cross_entropy, Gradients, ToyModel};
pub use pretrain::{
    contrastive_loss, pretrain_instance_discrimination, BackboneGradients, PretrainConfig,
};
pub use run::{ToyRun, ToyRunConfig};
pub use task::{centroid_init_head, LabeledData, SyntheticTask};
