//! Point rasterization with depth-adaptive coverage windows and first-layer
//! occupancy filtering, so rays neither fall through near surfaces nor blend
//! across depth layers. The bucket-scatter implementation and the exhaustive
//! per-pixel oracle share every numeric path, so they agree exactly.

mod raster;
mod render;

pub use raster::{
    coverage_extent, first_layer_mask, rasterize, rasterize_oracle, RasterConfig, RasterOutput,
};
pub use render::{render_view, RenderView};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("point depth must be positive (got {0})")]
    NonPositiveDepth(f64),
    #[error(transparent)]
    NeuralPoints(#[from] crate::neuralpoints::NeuralPointError),
}
