//! Deterministic mini-batch training with Adam, early stopping and
//! resumable checkpoints.

mod checkpoint;
mod optimizer;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION, MAGIC};
pub use optimizer::{adam_step, clip_gradients, global_norm, OptimizerState, TrainConfig};
pub use trainer::{
    batch_indices, derive_seed, epoch_permutation, train, validation_loss, write_history, HistoryRow, TrainOutcome,
    TrainState,
};
