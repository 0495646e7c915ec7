//! Synthetic scene generation and evaluation metrics: analytic ray-cast
//! renders, ground-truth flow, noise models and dataset emission. Every
//! oracle-based test in the workspace consumes this module.

mod flow;
mod metrics;
mod scene;
mod spec_file;

pub use flow::ground_truth_flow;
pub use metrics::{
    depth_metrics, median_scale, psnr, trajectory_ate, DepthMetrics, MetricsError, PSNR_CAP,
};
pub use scene::{
    crease_scene, demo_room_scene, line_trajectory, look_at_pose, orbit_trajectory, plane_scene,
    NoiseModel, Primitive, SceneSpec, Shape,
};
pub use spec_file::{parse_scene_toml, parse_scene_toml_with_frames};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use crate::correspondence::{write_flow, CorrespondenceError, FlowField};
use crate::geometry::{
    save_dataset_frame, write_intrinsics, write_poses, DatasetError, DepthImage, Grid,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("frame index {index} out of range ({len} frames)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Flow(#[from] CorrespondenceError),
    #[error("scene spec: {0}")]
    Spec(String),
}

/// Additive Gaussian depth noise on valid pixels, deterministic in `rng`.
pub fn apply_depth_noise(depth: &DepthImage, sigma: f64, rng: &mut ChaCha8Rng) -> DepthImage {
    if sigma <= 0.0 {
        return depth.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let values = Grid::from_fn(depth.width(), depth.height(), |x, y| {
        match depth.depth(x, y) {
            Some(d) => (d + normal.sample(rng)).max(1e-3),
            None => 0.0,
        }
    });
    DepthImage::with_validity(values, depth.validity.clone())
}

/// Gaussian flow noise plus a fraction of gross outliers (uniform offsets in
/// ±20 px) that keep their validity bit, so downstream filters must catch
/// them.
pub fn apply_flow_noise(
    flow: &FlowField,
    sigma: f64,
    outlier_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> FlowField {
    if sigma <= 0.0 && outlier_fraction <= 0.0 {
        return flow.clone();
    }
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    let gross = Uniform::new(-20.0, 20.0).expect("valid range");
    let coin = Uniform::new(0.0, 1.0).expect("valid range");
    let offsets = Grid::from_fn(flow.width(), flow.height(), |x, y| {
        let mut o = flow.offset(x, y);
        if !flow.is_valid(x, y) {
            return o;
        }
        if sigma > 0.0 {
            o[0] += normal.sample(rng);
            o[1] += normal.sample(rng);
        }
        if outlier_fraction > 0.0 && coin.sample(rng) < outlier_fraction {
            o[0] += gross.sample(rng);
            o[1] += gross.sample(rng);
        }
        o
    });
    FlowField::new(offsets, flow.validity.clone())
}

/// Renders every frame of `scene` into the dataset directory layout, plus
/// forward and backward ground-truth flow for frame pairs within
/// `flow_window` of each other. Noise from `scene.noise` is applied to the
/// emitted depth and flow (renders stay exact internally).
pub fn generate_dataset(
    scene: &SceneSpec,
    out: &Path,
    flow_window: usize,
) -> Result<(), SynthError> {
    std::fs::create_dir_all(out).map_err(|source| DatasetError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x5EED_DA7A);
    let n = scene.trajectory.len();
    let mut poses = Vec::with_capacity(n);
    for index in 0..n {
        let mut frame = scene.render_frame(index)?;
        if let Some(depth) = &frame.depth {
            frame.depth = Some(apply_depth_noise(depth, scene.noise.depth_sigma, &mut rng));
        }
        save_dataset_frame(out, &frame)?;
        poses.push((index, frame.pose.expect("synthetic frames are posed")));
    }
    write_poses(&out.join("poses.txt"), &poses)?;
    write_intrinsics(&out.join("intrinsics.txt"), &scene.intrinsics)?;

    let flow_dir = out.join("flow");
    std::fs::create_dir_all(&flow_dir).map_err(|source| DatasetError::Io {
        path: flow_dir.clone(),
        source,
    })?;
    for i in 0..n {
        for j in 0..n {
            if i == j || i.abs_diff(j) > flow_window {
                continue;
            }
            let flow = ground_truth_flow(scene, i, j)?;
            let noisy = apply_flow_noise(
                &flow,
                scene.noise.flow_sigma,
                scene.noise.outlier_fraction,
                &mut rng,
            );
            write_flow(&flow_dir.join(format!("{i:06}_{j:06}.flw")), &noisy)?;
        }
    }
    Ok(())
}
