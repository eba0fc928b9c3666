//! Training, inference, checkpoints and gradient checks.

mod adadelta;
mod checkpoint;
pub mod data;
pub mod gradcheck;
mod loss;
mod predict;
mod train;

pub use adadelta::{adadelta_step, AdadeltaConfig, AdadeltaState};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use loss::cross_entropy;
pub use predict::{accumulate_predictions, evaluate, predict, predict_tensor, provenance_for, scores_to_masks};
pub use train::{epoch_order, train, trainable_vars, EpochLoss, TrainOutcome, TrainState, Trainer};
