//! Conversion of depth images into flexion images: a per-pixel scalar in
//! \[0, 1\] measuring the agreement of two local surface normals. The value is
//! invariant to rigid motion of the surface, which makes depth-only input
//! trackable by color-based machinery.
//!
//! At each pixel the four axis neighbors at ±`step` are unprojected together
//! with the pixel itself. Two one-sided normals are formed from diagonally
//! opposite quadrants,
//!
//! ```text
//! n_a = normalize((p_right - p_center) × (p_down - p_center))
//! n_b = normalize((p_left  - p_center) × (p_up   - p_center))
//! ```
//!
//! and the flexion is |n_a · n_b|. On a plane both normals coincide and the
//! value is exactly 1; across a 90° crease the two quadrants see the two
//! different planes and the value drops to 0. Symmetric central differences
//! cannot distinguish the two sides (the same blended normal appears in both
//! pairings), which is why the quadrant construction is used.

use nalgebra::{Vector2, Vector3};

use crate::geometry::{unproject_pixel, ColorImage, DepthImage, Grid, Intrinsics};

/// Scalar flexion values in \[0, 1\] with a validity mask. Pixels whose
/// neighborhood touches invalid depth are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexionImage {
    pub values: Grid<f64>,
    pub validity: Grid<bool>,
}

impl FlexionImage {
    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    /// Replicates the flexion channel to RGB so color-consuming blocks can
    /// treat it as an ordinary image.
    pub fn to_color(&self) -> ColorImage {
        ColorImage::new(Grid::from_fn(self.width(), self.height(), |x, y| {
            if *self.validity.get(x, y) {
                let v = *self.values.get(x, y);
                [v, v, v]
            } else {
                [0.0, 0.0, 0.0]
            }
        }))
    }
}

fn unproject_at(d: &DepthImage, k: &Intrinsics, x: usize, y: usize) -> Option<Vector3<f64>> {
    let depth = d.depth(x, y)?;
    unproject_pixel(&Vector2::new(x as f64, y as f64), 1.0 / depth, k).ok()
}

/// Converts a depth image into a flexion image with the given neighbor
/// offset in pixels. Invalid neighborhoods produce invalid output pixels.
pub fn depth_to_flexion(d: &DepthImage, k: &Intrinsics, step: usize) -> FlexionImage {
    let step = step.max(1);
    let (w, h) = (d.width(), d.height());
    let mut values = Grid::filled(w, h, 0.0);
    let mut validity = Grid::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if x < step || y < step || x + step >= w || y + step >= h {
                continue;
            }
            let Some(pc) = unproject_at(d, k, x, y) else {
                continue;
            };
            let (Some(pr), Some(pl), Some(pd), Some(pu)) = (
                unproject_at(d, k, x + step, y),
                unproject_at(d, k, x - step, y),
                unproject_at(d, k, x, y + step),
                unproject_at(d, k, x, y - step),
            ) else {
                continue;
            };
            let na = (pr - pc).cross(&(pd - pc));
            let nb = (pl - pc).cross(&(pu - pc));
            let (la, lb) = (na.norm(), nb.norm());
            if la < 1e-14 || lb < 1e-14 {
                continue;
            }
            let flexion = (na.dot(&nb) / (la * lb)).abs().clamp(0.0, 1.0);
            values.set(x, y, flexion);
            validity.set(x, y, true);
        }
    }
    FlexionImage { values, validity }
}
