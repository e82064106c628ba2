//! Cross-modal contrastive pretraining of the point encoder.

mod config;
mod loss;
mod optim;
mod trainer;

pub use config::TrainingConfig;
pub use loss::{loss_combined, loss_image_point, loss_text_point, Batch, LossValue};
pub use optim::{learning_rate_at, AdamW};
pub use trainer::{
    batch_objective, checkpoint_digest, decode_state, encode_state, read_state, train, write_state, StepLog,
    TrainingData, TrainingOutcome, TrainingReport, TrainingState,
};
