//! Dual-purpose multi-resolution neural points: positions with learnable
//! features at several spatial densities, a shared MLP color decoder, and an
//! online trainer with jump-start and least-trained-first scheduling. The
//! same point sets drive color prediction here and depth rendering in the
//! rasterizer.
//!
//! Concurrency: one writer trains at a time (`&mut NeuralPointSet`); readers
//! render from [`NeuralPointSet::snapshot`] values and never observe a
//! partially updated state.

mod checkpoint;
mod decoder;
mod kdtree;
mod set;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use decoder::{AdamParams, Mlp, MlpGrads};
pub use kdtree::{KdTree, Neighbors};
pub use set::{AllocationReport, NeuralPointConfig, NeuralPointLevel, NeuralPointSet};
pub use train::{loss_and_grads, FeatureGrads, TrainFrame, TrainFrameQueue, Trainer, TrainerConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralPointError {
    #[error("neural point level {0} is empty")]
    EmptyLevel(usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("bad checkpoint {path}: {message}")]
    Format {
        path: std::path::PathBuf,
        message: String,
    },
}
