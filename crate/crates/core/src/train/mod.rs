//! Training on streams of prior draws, with checkpointing.

pub mod checkpoint;
pub mod optim;
pub mod schedule;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, RunningStats, StreamState};
pub use optim::{AdamConfig, AdamState};
pub use schedule::lr_at;
pub use trainer::{
    draw_sample, initial_parameters, train, validate, validation_set, RunOptions, StepReport, TrainConfig,
    TrainSample, Trainer, Validation,
};
