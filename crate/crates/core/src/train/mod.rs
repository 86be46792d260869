//! Training configuration, the training loop and checkpoints.

mod checkpoint;
mod config;
mod trainer;

pub use checkpoint::{write_atomic, Checkpoint, CheckpointError, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{merge, Preset, TrainConfig};
pub use trainer::{
    dev_report, evaluate_at, selection_accuracy, train, Dataset, DevReport, MetricsRow, TrainError, TrainOutcome,
    METRICS_HEADER,
};
