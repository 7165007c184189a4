//! Optimiser, schedule, training loop and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod optim;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use optim::{adamw_step, clip_gradients, cosine_warmup_lr, AdamW, OptimizerState};
pub use trainer::{train_model, BranchOptions, EarlyStopState, EpochRecord, History, StepRecord, TrainedModel};
