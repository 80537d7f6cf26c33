//! Neural policy: autodiff tape, the message-passing network, AdamW,
//! training, metrics and checkpoints.

pub mod adamw;
pub mod checkpoint;
pub mod metrics;
pub mod policy;
pub mod tape;
pub mod train;

pub use metrics::Metrics;
pub use policy::{Policy, PolicyConfig, PolicyNet, ScoreMatrix};
pub use train::{evaluate, train, TrainConfig, TrainOutcome};
