//! Gauss-Newton solvers over dense correspondences: full dense bundle
//! adjustment (poses, intrinsics, per-pixel inverse depth with a Schur
//! complement over the block-diagonal depth Hessian), pose-only sparse patch
//! adjustment, good-neighbor frame selection and robust scale recovery.

mod neighbors;
mod patches;
mod problem;
mod scale;
mod solver;

pub use neighbors::{select_neighbors, NeighborConfig};
pub use patches::{solve_pose_only, Patch, PatchEdge, PatchGraph};
pub use problem::{CamParams, DbaProblem, DbaSolution, SolverConfig, SourceObservations};
pub use scale::{recover_scale, ScaleConfig};
pub use solver::solve_dba;

/// Residual/Jacobian evaluation helpers exposed for oracle-style testing
/// (finite-difference checks, dense reference solves).
pub mod diagnostics {
    pub use super::solver::{analytic_jacobian_dense, apply_delta, residual_vector, DbaState};
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DbaError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("frame {frame} has only {edges} edges (need at least 6)")]
    InsufficientConstraints { frame: usize, edges: usize },
    #[error("need at least 3 landmarks with valid estimated depth, got {0}")]
    InsufficientLandmarks(usize),
    #[error("invalid problem: {0}")]
    BadProblem(String),
}
