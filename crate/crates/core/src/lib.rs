//! Geometric and numerical core of a workflow-centric incremental
//! scene-modeling toolkit.
//!
//! The building blocks are:
//!
//! - [`geometry`]: poses, pinhole cameras, image containers, dataset IO
//! - [`flexion`]: depth-to-flexion conversion for trackable depth input
//! - [`correspondence`]: dense flow containers and correspondence filters
//! - [`dba`]: dense bundle adjustment, pose-only patch BA, neighbor
//!   selection and scale recovery
//! - [`scalecov`]: Gaussian-process scale regression for depth completion
//! - [`neuralpoints`]: multi-resolution neural points with online training
//! - [`rasterizer`]: point rasterization with adaptive coverage and
//!   first-layer filtering
//! - [`synth`]: synthetic scenes, ground-truth flow and evaluation metrics
//! - [`pipeline`]: product-line assembly and sequence execution

pub mod correspondence;
pub mod dba;
pub mod flexion;
pub mod geometry;
pub mod neuralpoints;
pub mod pipeline;
pub mod rasterizer;
pub mod scalecov;
pub mod synth;

pub use geometry::{ColorImage, DepthImage, Frame, Grid, Intrinsics, Pose};
