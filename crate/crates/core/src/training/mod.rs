//! Loss, optimiser, training loop, grid search and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod grid;
pub mod loss;
pub mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use grid::{grid_search, render_grid_csv, render_grid_table, GridCell, GridRow, GridSpec};
pub use checkpoint::{load_checkpoint, load_checkpoint_matching, save_checkpoint};
pub use loss::{loss, loss_var, LossKind};
pub use trainer::{evaluate_loss, train, train_batch, EpochRecord, TrainConfig, TrainOutcome};
