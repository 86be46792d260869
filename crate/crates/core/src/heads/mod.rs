//! Scoring heads, training losses and the optimizer.

mod loss;
mod model;
mod optim;
mod sampling;

pub use loss::{
    loss_total, loss_value, mlm_pretrain_loss, CompiledExample, EvidencePair, LossBreakdown, LossWeights, TrainExample,
    COTRAIN_MASKS,
};
pub use model::{Head, HeadParams, MetaModel, ModelError, ModelOptions};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, StepInfo};
pub use sampling::{make_alternate, negatives_per_epoch, pseudo_label, sample_negatives, SampleError};
