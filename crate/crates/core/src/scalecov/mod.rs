//! Gaussian-process scale regression for depth completion: observed metric
//! depth over a dense depth prior yields per-pixel scale observations
//! s = z/ẑ; the GP posterior fills the scale field elsewhere, and the
//! completed depth is z̄ = s̄·ẑ with per-pixel variance.

mod gp;
mod kernel;

pub use gp::{complete_depth, gp_regress_scale, ScaleCovConfig, ScaleMean, ScalePosterior};
pub use kernel::{Kernel, RbfKernel};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleCovError {
    #[error("no pixels are valid in both the observed depth and the prior")]
    NoObservations,
    #[error("covariance factorization failed even after jitter escalation")]
    NumericalFailure,
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
}
