use nalgebra::Vector2;

use crate::correspondence::FlowField;
use crate::geometry::{project_point, Grid};

use super::{SceneSpec, SynthError};

/// Occlusion tolerance in meters for the frame-j visibility test.
const OCCLUSION_EPS: f64 = 1e-4;

/// Exact ground-truth flow from frame `i` to frame `j`: unproject with the
/// analytic depth, transform by the relative pose, reproject. A pixel is
/// valid when its target stays in bounds and is not occluded in frame `j`.
pub fn ground_truth_flow(scene: &SceneSpec, i: usize, j: usize) -> Result<FlowField, SynthError> {
    let n = scene.trajectory.len();
    for index in [i, j] {
        if index >= n {
            return Err(SynthError::IndexOutOfRange { index, len: n });
        }
    }
    let k = scene.intrinsics;
    let (w, h) = (k.width, k.height);
    if i == j {
        return Ok(FlowField::zero(w, h));
    }

    let pose_i = scene.trajectory[i];
    let pose_j = scene.trajectory[j];
    let rot_i = pose_i.rotation_matrix();
    let rot_j = pose_j.rotation_matrix();
    let origin_i = pose_i.translation();
    let origin_j = pose_j.translation();
    let j_from_world = pose_j.inverse();

    let mut offsets = Grid::filled(w, h, [0.0, 0.0]);
    let mut validity = Grid::filled(w, h, false);
    if scene.camera_inside_geometry(i) || scene.camera_inside_geometry(j) {
        return Ok(FlowField::new(offsets, validity));
    }

    for y in 0..h {
        for x in 0..w {
            let dir_i = rot_i * k.ray(x as f64, y as f64);
            let Some((t, _)) = scene.cast_world(&origin_i, &dir_i) else {
                continue;
            };
            let p_world = origin_i + dir_i * t;
            let p_j = j_from_world.apply(&p_world);
            if p_j.z <= 0.0 {
                continue;
            }
            let Ok((uv_j, depth_j)) = project_point(&p_j, &k) else {
                continue;
            };
            if !k.contains(&uv_j) {
                continue;
            }
            // visibility in frame j along the exact target ray
            let dir_j = rot_j * k.ray(uv_j.x, uv_j.y);
            if let Some((t_scene, _)) = scene.cast_world(&origin_j, &dir_j) {
                if t_scene < depth_j - OCCLUSION_EPS {
                    continue;
                }
            }
            let uv_i = Vector2::new(x as f64, y as f64);
            offsets.set(x, y, [uv_j.x - uv_i.x, uv_j.y - uv_i.y]);
            validity.set(x, y, true);
        }
    }
    Ok(FlowField::new(offsets, validity))
}
