//! Masked-diffusion corruption, the 1/t-weighted masked cross-entropy, and
//! the two-stage pipeline: a plainly trained reference model, then a target
//! model trained on inputs carrying the frozen reference's residuals.

mod config;
mod corrupt;
mod loss;
mod optim;
mod residuals;
mod trainer;

pub use config::TrainConfig;
pub use corrupt::{corrupt, CorruptionSample};
pub use loss::{masked_ce_loss, masked_ce_loss_and_grad};
pub use optim::AdamW;
pub use residuals::{make_training_residuals, reference_signal};
pub use trainer::{
    block_example, heldout_masked_ce, loss_and_grad, train_reference, train_seqd, train_target_rcd,
    write_train_log, TrainExample, TrainLogRow, TrainOutcome,
};
