//! Dense flow containers and the correspondence filters that gate dense
//! bundle adjustment: forward/backward cross check, epipolar static check
//! and in-image epipole exclusion.

mod essential;
mod filters;
mod flow;

pub use essential::{estimate_essential, EpipolarModel, Epipole};
pub use filters::{
    combine_masks, cross_check, epipole_check, fundamental_from_essential, static_check,
};
pub use flow::{read_flow, write_flow, FlowField};

use thiserror::Error;

/// Squared pixel distance threshold of the epipolar static check
/// (chi-square, 1 dof, 95%).
pub const STATIC_CHECK_THRESHOLD_SQ: f64 = 3.84;

/// Forward/backward consistency threshold in pixels.
pub const CROSS_CHECK_THRESHOLD: f64 = 0.5;

/// Default exclusion radius around an in-image epipole, in pixels.
pub const EPIPOLE_RADIUS: f64 = 40.0;

#[derive(Debug, Error)]
pub enum CorrespondenceError {
    #[error("flow field sizes do not match: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("bad flow file {path}: {message}")]
    Format {
        path: std::path::PathBuf,
        message: String,
    },
}
