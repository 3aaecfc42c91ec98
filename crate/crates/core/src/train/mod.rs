//! Optimization, training loops and gradient verification.

pub mod adam;
pub mod config;
pub mod gradcheck;
pub mod guided;
pub mod trainer;

pub use adam::{adam_step, Adam, AdamState, StepStats};
pub use config::{Setting, TrainConfig};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use guided::{AuxHead, AuxHeads, Trainable};
pub use trainer::{
    class_names, default_class_names, evaluate, evaluate_checkpoint, train_manifest, train_sequences,
    train_with_precision, EpochLog, Example, Target, TrainOutcome,
};
