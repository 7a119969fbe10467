//! Model assembly, optimization and the repeated-split experiment protocol.

mod checkpoint;
mod config;
mod experiment;
mod model;
mod optim;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{ModelConfig, PoolingKind, TrainConfig};
pub use experiment::{
    mean_std, ratio_sweep, repeat_seeds, run_experiment, run_repeat, RepeatMetrics, RunMetrics,
    SweepRow, THREADS_ENV,
};
pub use model::{
    batch_loss, classification_loss, predictions, total_loss, BatchLoss, Block, BlockPool,
    ForwardOutput, Model,
};
pub use optim::Adam;
pub use trainer::{evaluate, train_model, EpochMetrics, EvalResult, TrainOutcome};

use thiserror::Error;

use crate::graph::GraphError;
use crate::pool::PoolError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
}

/// SplitMix64 finalizer over `seed ^ salt`, for deriving independent streams.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
