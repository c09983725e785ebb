//! Optimizer, learning-rate schedule, training loop, leave-one-subject-out
//! cross-validation and run artifacts.

mod adam;
mod checkpoint;
mod engine;
mod loso;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_metrics_csv, save_checkpoint, write_metrics_csv};
pub use engine::{train, EpochMetrics, Split, TrainConfig, TrainOutcome};
pub use loso::{cross_validate, loso_split, CvReport, Fold, FoldPlan, FoldResult};
