use nalgebra::Vector2;

use crate::correspondence::FlowField;
use crate::geometry::{DepthImage, Grid, Intrinsics, Pose};

use super::DbaError;

/// Raw pinhole parameters used while intrinsics are being optimized; the
/// validated [`Intrinsics`] invariants only need to hold on the final result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CamParams {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CamParams {
    pub fn from_intrinsics(k: &Intrinsics) -> Self {
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
        }
    }

    pub fn to_intrinsics(self, width: usize, height: usize) -> Result<Intrinsics, DbaError> {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy, width, height)
            .map_err(|e| DbaError::DegenerateGeometry(format!("solved intrinsics invalid: {e}")))
    }
}

/// One source frame's observations: the expected correspondence `x*_j` per
/// reference pixel, `None` where flow is missing or filtered out.
#[derive(Debug, Clone)]
pub struct SourceObservations {
    pub frame_index: usize,
    pub targets: Vec<Option<Vector2<f64>>>,
}

/// Dense bundle adjustment problem over a subsampled reference pixel grid.
///
/// `poses[0]` is the reference frame and is gauge-fixed by default; the
/// remaining entries are the source frames.
#[derive(Debug, Clone)]
pub struct DbaProblem {
    pub pixels: Vec<Vector2<f64>>,
    pub sources: Vec<SourceObservations>,
    pub poses: Vec<Pose>,
    pub fixed_poses: Vec<bool>,
    pub intrinsics: Intrinsics,
    pub init_inv_depth: Vec<f64>,
    pub optimize_poses: bool,
    pub optimize_intrinsics: bool,
}

impl DbaProblem {
    pub fn validate(&self) -> Result<(), DbaError> {
        if self.poses.len() < 2 {
            return Err(DbaError::BadProblem("need at least 2 frames".into()));
        }
        if self.sources.is_empty() {
            return Err(DbaError::BadProblem("need at least 1 source frame".into()));
        }
        if self.fixed_poses.len() != self.poses.len() {
            return Err(DbaError::BadProblem("fixed_poses length mismatch".into()));
        }
        if self.pixels.is_empty() {
            return Err(DbaError::BadProblem("no reference pixels".into()));
        }
        if self.init_inv_depth.len() != self.pixels.len() {
            return Err(DbaError::BadProblem("inverse depth length mismatch".into()));
        }
        if self.init_inv_depth.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(DbaError::BadProblem(
                "initial inverse depth must be positive".into(),
            ));
        }
        for src in &self.sources {
            if src.frame_index == 0 || src.frame_index >= self.poses.len() {
                return Err(DbaError::BadProblem(format!(
                    "source frame index {} out of range",
                    src.frame_index
                )));
            }
            if src.targets.len() != self.pixels.len() {
                return Err(DbaError::BadProblem("observation length mismatch".into()));
            }
        }
        for (i, _) in self.pixels.iter().enumerate() {
            if !self.sources.iter().any(|s| s.targets[i].is_some()) {
                return Err(DbaError::BadProblem(format!(
                    "pixel {i} has no observations"
                )));
            }
        }
        Ok(())
    }

    /// Builds a problem by subsampling the reference image on a regular grid
    /// of the given stride. Each source supplies a flow field plus an
    /// optional extra mask (from the correspondence filters). Pixels with no
    /// surviving observation are dropped. The inverse depth initializes from
    /// the prior where valid, else at 1.0 m⁻¹.
    #[allow(clippy::too_many_arguments)]
    pub fn from_flows(
        intrinsics: Intrinsics,
        stride: usize,
        ref_pose: Pose,
        sources: &[(Pose, &FlowField, Option<&Grid<bool>>)],
        depth_prior: Option<&DepthImage>,
        optimize_poses: bool,
        optimize_intrinsics: bool,
    ) -> Result<Self, DbaError> {
        let stride = stride.max(1);
        if sources.is_empty() {
            return Err(DbaError::BadProblem("need at least 1 source frame".into()));
        }
        let (w, h) = (intrinsics.width, intrinsics.height);
        let mut pixels = Vec::new();
        let mut init = Vec::new();
        let mut per_source: Vec<Vec<Option<Vector2<f64>>>> = vec![Vec::new(); sources.len()];

        let mut y = stride / 2;
        while y < h {
            let mut x = stride / 2;
            while x < w {
                let mut any = false;
                let mut row = Vec::with_capacity(sources.len());
                for (_, flow, mask) in sources {
                    let masked = mask.is_none_or(|m| *m.get(x, y));
                    let target = if masked && flow.is_valid(x, y) {
                        let t = flow.target(x, y).unwrap();
                        any = true;
                        Some(Vector2::new(t[0], t[1]))
                    } else {
                        None
                    };
                    row.push(target);
                }
                if any {
                    pixels.push(Vector2::new(x as f64, y as f64));
                    for (s, t) in row.into_iter().enumerate() {
                        per_source[s].push(t);
                    }
                    let d0 = depth_prior
                        .and_then(|p| p.depth(x, y))
                        .map(|z| 1.0 / z)
                        .unwrap_or(1.0);
                    init.push(d0.max(1e-6));
                }
                x += stride;
            }
            y += stride;
        }
        if pixels.is_empty() {
            return Err(DbaError::BadProblem(
                "no valid observations on the reference grid".into(),
            ));
        }

        let mut poses = Vec::with_capacity(sources.len() + 1);
        let mut fixed = Vec::with_capacity(sources.len() + 1);
        poses.push(ref_pose);
        fixed.push(true);
        for (pose, _, _) in sources {
            poses.push(*pose);
            fixed.push(false);
        }
        let sources = per_source
            .into_iter()
            .enumerate()
            .map(|(i, targets)| SourceObservations {
                frame_index: i + 1,
                targets,
            })
            .collect();
        let problem = Self {
            pixels,
            sources,
            poses,
            fixed_poses: fixed,
            intrinsics,
            init_inv_depth: init,
            optimize_poses,
            optimize_intrinsics,
        };
        problem.validate()?;
        Ok(problem)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Initial Levenberg damping; ×10 on a rejected step, ÷10 on accept.
    pub damping: f64,
    /// Relative cost decrease below which the solve is converged.
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            damping: 1e-4,
            tol: 1e-12,
        }
    }
}

/// Outputs of a dense bundle adjustment solve.
#[derive(Debug, Clone)]
pub struct DbaSolution {
    pub poses: Vec<Pose>,
    pub intrinsics: Intrinsics,
    pub pixels: Vec<Vector2<f64>>,
    pub inv_depth: Vec<f64>,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DbaSolution {
    /// Scatters the solved inverse depths back into a sparse depth image at
    /// their grid pixels.
    pub fn sparse_depth_image(&self, width: usize, height: usize) -> DepthImage {
        let mut values = Grid::filled(width, height, 0.0);
        for (px, d) in self.pixels.iter().zip(&self.inv_depth) {
            let (x, y) = (px.x.round() as usize, px.y.round() as usize);
            if x < width && y < height && *d > 0.0 {
                values.set(x, y, 1.0 / d);
            }
        }
        DepthImage::new(values)
    }

    /// Densifies the solved grid depth to full resolution by bilinear
    /// interpolation over the grid cells. Border pixels outside the grid hull
    /// clamp to the nearest grid node.
    pub fn dense_depth_image(&self, width: usize, height: usize, stride: usize) -> DepthImage {
        let stride = stride.max(1);
        let gx0 = stride / 2;
        let gw = (width - gx0).div_ceil(stride);
        let gh = (height - gx0).div_ceil(stride);
        let mut grid_vals = Grid::filled(gw, gh, 0.0);
        let mut grid_mask = Grid::filled(gw, gh, false);
        for (px, d) in self.pixels.iter().zip(&self.inv_depth) {
            let gx = ((px.x as usize).saturating_sub(gx0)) / stride;
            let gy = ((px.y as usize).saturating_sub(gx0)) / stride;
            if gx < gw && gy < gh && *d > 0.0 {
                grid_vals.set(gx, gy, *d);
                grid_mask.set(gx, gy, true);
            }
        }
        let values = Grid::from_fn(width, height, |x, y| {
            let fx = ((x as f64 - gx0 as f64) / stride as f64).clamp(0.0, (gw - 1) as f64);
            let fy = ((y as f64 - gx0 as f64) / stride as f64).clamp(0.0, (gh - 1) as f64);
            match crate::geometry::bilinear_masked(&grid_vals, &grid_mask, fx, fy) {
                Some(inv_d) if inv_d > 0.0 => 1.0 / inv_d,
                _ => 0.0,
            }
        });
        DepthImage::new(values)
    }
}
