//! Contrastive objectives, the optimizer and the training loop.

mod adam;
mod config;
mod loss;
mod trainer;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use config::{Objective, TrainConfig};
pub use loss::{
    contrastive_loss, contrastive_loss_grad, cosine_sim, cosine_sim_flagged, mnr_loss,
    mnr_loss_grad, Batch, BatchGradients, LossOutput,
};
pub use trainer::{batch_objective, train, BatchIds, LossRecord, LossTrace};
