use nalgebra::Vector3;

use crate::geometry::{ColorImage, DepthImage, Grid, Intrinsics, Pose};
use crate::neuralpoints::NeuralPointSet;

use super::raster::{rasterize, RasterConfig};
use super::RasterError;

/// A rendered view: rasterized depth plus decoded surface colors.
#[derive(Debug, Clone)]
pub struct RenderView {
    pub depth: DepthImage,
    pub color: ColorImage,
}

/// Renders the neural point set from a camera pose: the finest level's
/// positions are rasterized for surface points, which are transformed back
/// to world space and decoded into colors.
pub fn render_view(
    set: &NeuralPointSet,
    pose: &Pose,
    intrinsics: &Intrinsics,
    overrides: Option<&RasterConfig>,
) -> Result<RenderView, RasterError> {
    let finest = &set.levels[0];
    let cfg = match overrides {
        Some(c) => RasterConfig {
            intrinsics: *intrinsics,
            ..*c
        },
        None => RasterConfig::new(*intrinsics, finest.resolution),
    };
    let world_to_cam = pose.inverse();
    let cam_points: Vec<Vector3<f64>> = finest
        .positions()
        .iter()
        .map(|p| world_to_cam.apply(p))
        .collect();
    let raster = rasterize(&cam_points, &cfg);

    let (w, h) = (cfg.intrinsics.width, cfg.intrinsics.height);
    let mut colors = Grid::filled(w, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            if let Some(p_cam) = raster.surface_point(x, y) {
                let p_world = pose.apply(&p_cam);
                let rgb = set.predict_color(&p_world)?;
                colors.set(x, y, rgb);
            }
        }
    }
    Ok(RenderView {
        depth: raster.depth,
        color: ColorImage::new(colors),
    })
}
