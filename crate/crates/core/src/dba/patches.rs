use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::geometry::{Intrinsics, Pose};

use super::problem::SolverConfig;
use super::DbaError;

/// A tracked patch anchored at a valid depth pixel of its host frame; the
/// inverse depth is fixed and never optimized.
#[derive(Debug, Clone, Copy)]
pub struct Patch {
    pub host_frame: usize,
    pub pixel: Vector2<f64>,
    pub inv_depth: f64,
}

/// One observation of a patch center in a target frame, with the
/// correspondence update `delta` and a scalar confidence weight.
#[derive(Debug, Clone, Copy)]
pub struct PatchEdge {
    pub patch: usize,
    pub target_frame: usize,
    pub observed: Vector2<f64>,
    pub delta: Vector2<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PatchGraph {
    pub patches: Vec<Patch>,
    pub edges: Vec<PatchEdge>,
}

impl PatchGraph {
    pub fn validate(&self, n_frames: usize) -> Result<(), DbaError> {
        for p in &self.patches {
            if p.host_frame >= n_frames {
                return Err(DbaError::BadProblem(format!(
                    "patch host frame {} out of range",
                    p.host_frame
                )));
            }
            if !p.inv_depth.is_finite() || p.inv_depth <= 0.0 {
                return Err(DbaError::BadProblem("patch inverse depth must be > 0".into()));
            }
        }
        for e in &self.edges {
            if e.patch >= self.patches.len() || e.target_frame >= n_frames {
                return Err(DbaError::BadProblem("edge references missing patch or frame".into()));
            }
        }
        Ok(())
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

struct EdgeEval {
    residual: Vector2<f64>,
    j_proj: Matrix2x3<f64>,
    w: Vector3<f64>,
    rj_t: Matrix3<f64>,
}

fn eval_edge(poses: &[Pose], k: &Intrinsics, graph: &PatchGraph, edge: &PatchEdge) -> EdgeEval {
    let patch = &graph.patches[edge.patch];
    let m = k.ray(patch.pixel.x, patch.pixel.y);
    let p_host = m / patch.inv_depth;
    let w = poses[patch.host_frame].apply(&p_host);
    let g_j_inv = poses[edge.target_frame].inverse();
    let mut p_j = g_j_inv.apply(&w);
    if p_j.z < 1e-6 {
        p_j.z = 1e-6;
    }
    let z = p_j.z;
    let proj = Vector2::new(k.fx * p_j.x / z + k.cx, k.fy * p_j.y / z + k.cy);
    let residual = proj - (edge.observed + edge.delta);
    let j_proj = Matrix2x3::new(
        k.fx / z,
        0.0,
        -k.fx * p_j.x / (z * z),
        0.0,
        k.fy / z,
        -k.fy * p_j.y / (z * z),
    );
    EdgeEval {
        residual,
        j_proj,
        w,
        rj_t: g_j_inv.rotation_matrix(),
    }
}

fn graph_cost(poses: &[Pose], k: &Intrinsics, graph: &PatchGraph) -> f64 {
    graph
        .edges
        .iter()
        .map(|e| eval_edge(poses, k, graph, e).residual.norm_squared() * e.weight)
        .sum()
}

/// Pose-only sparse patch bundle adjustment: minimizes the weighted patch
/// reprojection cost over all poses except the first, which fixes the gauge.
/// Patch depths are never modified.
pub fn solve_pose_only(
    graph: &PatchGraph,
    initial_poses: &[Pose],
    k: &Intrinsics,
    config: &SolverConfig,
) -> Result<Vec<Pose>, DbaError> {
    graph.validate(initial_poses.len())?;
    if initial_poses.len() < 2 {
        return Err(DbaError::BadProblem("need at least 2 frames".into()));
    }
    // every free frame needs at least 6 constraining edges
    let mut edge_count = vec![0usize; initial_poses.len()];
    for e in &graph.edges {
        edge_count[e.target_frame] += 1;
        edge_count[graph.patches[e.patch].host_frame] += 1;
    }
    for (frame, count) in edge_count.iter().enumerate().skip(1) {
        if *count < 6 {
            return Err(DbaError::InsufficientConstraints {
                frame,
                edges: *count,
            });
        }
    }

    let n_free = initial_poses.len() - 1;
    let dim = 6 * n_free;
    let col_of = |frame: usize| -> Option<usize> { (frame > 0).then(|| 6 * (frame - 1)) };

    let mut poses = initial_poses.to_vec();
    let mut cost = graph_cost(&poses, k, graph);
    let mut lambda = config.damping.max(1e-15);
    let abs_tol = 1e-20 * graph.edges.len().max(1) as f64;

    for _ in 0..config.max_iters {
        if cost <= abs_tol {
            break;
        }
        let mut h = DMatrix::zeros(dim, dim);
        let mut b = DVector::zeros(dim);
        let mut jrow = DMatrix::zeros(2, dim);
        for e in &graph.edges {
            let eval = eval_edge(&poses, k, graph, e);
            jrow.fill(0.0);
            let host = graph.patches[e.patch].host_frame;
            if let Some(col) = col_of(host) {
                // r = Π(G_j⁻¹ G_i p) - obs: ∂r/∂ε_i = J_proj R_jᵀ [I | -skew(w)]
                let a = eval.j_proj * eval.rj_t;
                let block_r = -(a * skew(&eval.w));
                for r in 0..2 {
                    for c in 0..3 {
                        jrow[(r, col + c)] += a[(r, c)];
                        jrow[(r, col + 3 + c)] += block_r[(r, c)];
                    }
                }
            }
            if let Some(col) = col_of(e.target_frame) {
                let a = eval.j_proj * eval.rj_t;
                let block_r = a * skew(&eval.w);
                for r in 0..2 {
                    for c in 0..3 {
                        jrow[(r, col + c)] -= a[(r, c)];
                        jrow[(r, col + 3 + c)] += block_r[(r, c)];
                    }
                }
            }
            for r in 0..2 {
                for c in 0..dim {
                    let jrc = jrow[(r, c)];
                    if jrc == 0.0 {
                        continue;
                    }
                    b[c] -= e.weight * jrc * eval.residual[r];
                    for c2 in 0..dim {
                        h[(c, c2)] += e.weight * jrc * jrow[(r, c2)];
                    }
                }
            }
        }

        let mut accepted = false;
        while lambda <= 1e12 {
            let mut damped = h.clone();
            for i in 0..dim {
                damped[(i, i)] += lambda;
            }
            let Some(chol) = nalgebra::Cholesky::new(damped) else {
                lambda *= 10.0;
                continue;
            };
            let dp = chol.solve(&b);
            let mut candidate = poses.clone();
            for frame in 1..poses.len() {
                let col = 6 * (frame - 1);
                let dt = Vector3::new(dp[col], dp[col + 1], dp[col + 2]);
                let dtheta = Vector3::new(dp[col + 3], dp[col + 4], dp[col + 5]);
                candidate[frame] = poses[frame].left_update(&dt, &dtheta);
            }
            let new_cost = graph_cost(&candidate, k, graph);
            if new_cost.is_finite() && new_cost <= cost {
                let rel_drop = (cost - new_cost) / cost.max(1e-300);
                poses = candidate;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if rel_drop < config.tol {
                    return Ok(poses);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(poses)
}
