use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::geometry::Pose;

use super::problem::{CamParams, DbaProblem, DbaSolution, SolverConfig};
use super::DbaError;

/// Depth clamp keeping projections finite while an iterate wanders.
const MIN_Z: f64 = 1e-6;
/// Inverse depth positivity bound.
const MIN_INV_DEPTH: f64 = 1e-6;
const MAX_DAMPING: f64 = 1e12;

/// Mutable optimization state of a DBA solve.
#[derive(Debug, Clone)]
pub struct DbaState {
    pub poses: Vec<Pose>,
    pub cam: CamParams,
    pub inv_depth: Vec<f64>,
}

impl DbaState {
    pub fn from_problem(problem: &DbaProblem) -> Self {
        Self {
            poses: problem.poses.clone(),
            cam: CamParams::from_intrinsics(&problem.intrinsics),
            inv_depth: problem.init_inv_depth.clone(),
        }
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

struct ObsEval {
    residual: Vector2<f64>,
    j_proj: Matrix2x3<f64>,
    /// p_j in the source camera frame (z clamped for the projection).
    p_j: Vector3<f64>,
    /// world-space point, for pose Jacobians
    w: Vector3<f64>,
    /// R_j^T: world → source camera rotation
    rj_t: Matrix3<f64>,
    /// R_t: reference camera → world rotation
    rt: Matrix3<f64>,
    /// the reference ray (mx, my, 1)
    m: Vector3<f64>,
}

fn eval_obs(
    state: &DbaState,
    pixel: &Vector2<f64>,
    inv_depth: f64,
    src_frame: usize,
    target: &Vector2<f64>,
) -> ObsEval {
    let cam = &state.cam;
    let m = Vector3::new(
        (pixel.x - cam.cx) / cam.fx,
        (pixel.y - cam.cy) / cam.fy,
        1.0,
    );
    let p_t = m / inv_depth;
    let g_t = &state.poses[0];
    let w = g_t.apply(&p_t);
    let g_j_inv = state.poses[src_frame].inverse();
    let mut p_j = g_j_inv.apply(&w);
    if p_j.z < MIN_Z {
        p_j.z = MIN_Z;
    }
    let z = p_j.z;
    let proj = Vector2::new(cam.fx * p_j.x / z + cam.cx, cam.fy * p_j.y / z + cam.cy);
    let residual = target - proj;
    let j_proj = Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * p_j.x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * p_j.y / (z * z),
    );
    ObsEval {
        residual,
        j_proj,
        p_j,
        w,
        rj_t: g_j_inv.rotation_matrix(),
        rt: g_t.rotation_matrix(),
        m,
    }
}

/// Column layout of the reduced (non-depth) variables.
struct Layout {
    /// column offset per pose, None when fixed or poses are not optimized
    pose_cols: Vec<Option<usize>>,
    intr_col: Option<usize>,
    dim: usize,
}

fn layout(problem: &DbaProblem) -> Layout {
    let mut pose_cols = vec![None; problem.poses.len()];
    let mut dim = 0;
    if problem.optimize_poses {
        for (i, fixed) in problem.fixed_poses.iter().enumerate() {
            if !fixed {
                pose_cols[i] = Some(dim);
                dim += 6;
            }
        }
    }
    let intr_col = if problem.optimize_intrinsics {
        let c = dim;
        dim += 4;
        Some(c)
    } else {
        None
    };
    Layout {
        pose_cols,
        intr_col,
        dim,
    }
}

/// Writes the 2×dim pose/intrinsics Jacobian block of one observation into
/// `jp` (assumed zeroed) and returns the 2×1 depth column.
fn obs_jacobian(
    state: &DbaState,
    problem: &DbaProblem,
    lay: &Layout,
    pixel_idx: usize,
    src: usize,
    eval: &ObsEval,
    jp: &mut DMatrix<f64>,
) -> Vector2<f64> {
    let frame = problem.sources[src].frame_index;
    let d = state.inv_depth[pixel_idx];

    // depth column: ∂r/∂d = J_proj · R_jᵀ R_t · m / d²
    let jd_vec = eval.j_proj * (eval.rj_t * (eval.rt * eval.m)) / (d * d);

    if let Some(col) = lay.pose_cols[0] {
        // reference pose (left perturbation): ∂p_j/∂ε_t = R_jᵀ [I | -skew(w)]
        let a = eval.j_proj * eval.rj_t; // 2×3
        let block_t = -a; // translation part
        let block_r = a * skew(&eval.w); // rotation part
        for r in 0..2 {
            for c in 0..3 {
                jp[(r, col + c)] += block_t[(r, c)];
                jp[(r, col + 3 + c)] += block_r[(r, c)];
            }
        }
    }
    if let Some(col) = lay.pose_cols[frame] {
        // source pose: ∂p_j/∂ε_j = [-R_jᵀ | R_jᵀ skew(w)]
        let a = eval.j_proj * eval.rj_t;
        let block_t = a;
        let block_r = -(a * skew(&eval.w));
        for r in 0..2 {
            for c in 0..3 {
                jp[(r, col + c)] += block_t[(r, c)];
                jp[(r, col + 3 + c)] += block_r[(r, c)];
            }
        }
    }
    if let Some(col) = lay.intr_col {
        let cam = &state.cam;
        let z = eval.p_j.z;
        // direct projection dependency: -∂Π/∂θ
        let mut jtheta = [
            [-eval.p_j.x / z, 0.0],
            [0.0, -eval.p_j.y / z],
            [-1.0, 0.0],
            [0.0, -1.0],
        ];
        // back-projection dependency through m(θ)
        let chain = eval.j_proj * (eval.rj_t * eval.rt) / state.inv_depth[pixel_idx];
        let dm = [
            Vector3::new(-(eval.m.x) / cam.fx, 0.0, 0.0), // ∂m/∂fx = -(u-cx)/fx² = -mx/fx
            Vector3::new(0.0, -(eval.m.y) / cam.fy, 0.0),
            Vector3::new(-1.0 / cam.fx, 0.0, 0.0),
            Vector3::new(0.0, -1.0 / cam.fy, 0.0),
        ];
        for (t, dmt) in dm.iter().enumerate() {
            let v = chain * dmt;
            jtheta[t][0] -= v.x;
            jtheta[t][1] -= v.y;
        }
        for (t, jt) in jtheta.iter().enumerate() {
            jp[(0, col + t)] += jt[0];
            jp[(1, col + t)] += jt[1];
        }
    }
    jd_vec
}

fn total_cost(state: &DbaState, problem: &DbaProblem) -> f64 {
    let mut cost = 0.0;
    for src in &problem.sources {
        for (i, target) in src.targets.iter().enumerate() {
            let Some(target) = target else { continue };
            let eval = eval_obs(state, &problem.pixels[i], state.inv_depth[i], src.frame_index, target);
            cost += eval.residual.norm_squared();
        }
    }
    cost
}

struct NormalEquations {
    h_pp: DMatrix<f64>,
    b_p: DVector<f64>,
    h_dd: Vec<f64>,
    b_d: Vec<f64>,
    /// coupling column H_pd per depth variable
    v: Vec<DVector<f64>>,
    cost: f64,
}

fn assemble(state: &DbaState, problem: &DbaProblem, lay: &Layout) -> NormalEquations {
    let n = problem.pixels.len();
    let dim = lay.dim;
    let mut eq = NormalEquations {
        h_pp: DMatrix::zeros(dim, dim),
        b_p: DVector::zeros(dim),
        h_dd: vec![0.0; n],
        b_d: vec![0.0; n],
        v: vec![DVector::zeros(dim); n],
        cost: 0.0,
    };
    let mut jp = DMatrix::zeros(2, dim);
    for (s, src) in problem.sources.iter().enumerate() {
        for (i, target) in src.targets.iter().enumerate() {
            let Some(target) = target else { continue };
            let eval = eval_obs(state, &problem.pixels[i], state.inv_depth[i], src.frame_index, target);
            eq.cost += eval.residual.norm_squared();
            jp.fill(0.0);
            let jd = obs_jacobian(state, problem, lay, i, s, &eval, &mut jp);

            eq.h_dd[i] += jd.dot(&jd);
            eq.b_d[i] -= jd.dot(&eval.residual);
            if dim > 0 {
                for r in 0..2 {
                    for c in 0..dim {
                        let jrc = jp[(r, c)];
                        if jrc == 0.0 {
                            continue;
                        }
                        eq.b_p[c] -= jrc * eval.residual[r];
                        eq.v[i][c] += jrc * jd[r];
                        for c2 in 0..dim {
                            eq.h_pp[(c, c2)] += jrc * jp[(r, c2)];
                        }
                    }
                }
            }
        }
    }
    eq
}

fn apply_step(
    state: &DbaState,
    problem: &DbaProblem,
    lay: &Layout,
    dp: &DVector<f64>,
    dd: &[f64],
) -> DbaState {
    let mut next = state.clone();
    for (i, col) in lay.pose_cols.iter().enumerate() {
        if let Some(col) = col {
            let dt = Vector3::new(dp[*col], dp[col + 1], dp[col + 2]);
            let dtheta = Vector3::new(dp[col + 3], dp[col + 4], dp[col + 5]);
            next.poses[i] = state.poses[i].left_update(&dt, &dtheta);
        }
    }
    if let Some(col) = lay.intr_col {
        next.cam.fx = (state.cam.fx + dp[col]).max(1e-3);
        next.cam.fy = (state.cam.fy + dp[col + 1]).max(1e-3);
        next.cam.cx += dp[col + 2];
        next.cam.cy += dp[col + 3];
    }
    for (d, delta) in next.inv_depth.iter_mut().zip(dd) {
        *d = (*d + delta).max(MIN_INV_DEPTH);
    }
    let _ = problem;
    next
}

/// One damped Gauss-Newton step via the Schur complement onto the
/// pose/intrinsics block. Returns `None` when the reduced system is not
/// positive definite at this damping level.
fn schur_step(eq: &NormalEquations, lambda: f64) -> Option<(DVector<f64>, Vec<f64>)> {
    let dim = eq.b_p.len();
    let n = eq.h_dd.len();
    let mut dd = vec![0.0; n];
    if dim == 0 {
        for (d, (b, h)) in dd.iter_mut().zip(eq.b_d.iter().zip(&eq.h_dd)) {
            *d = b / (h + lambda);
        }
        return Some((DVector::zeros(0), dd));
    }
    let mut s = eq.h_pp.clone();
    for i in 0..dim {
        s[(i, i)] += lambda;
    }
    let mut rhs = eq.b_p.clone();
    for i in 0..n {
        let hd = eq.h_dd[i] + lambda;
        if hd <= 0.0 {
            return None;
        }
        let vi = &eq.v[i];
        let scale = 1.0 / hd;
        // S -= v vᵀ / hd, rhs -= v · b_d / hd
        for r in 0..dim {
            let vr = vi[r];
            if vr == 0.0 {
                continue;
            }
            rhs[r] -= vr * eq.b_d[i] * scale;
            for c in 0..dim {
                s[(r, c)] -= vr * vi[c] * scale;
            }
        }
    }
    let chol = nalgebra::Cholesky::new(s)?;
    let dp = chol.solve(&rhs);
    for (i, d) in dd.iter_mut().enumerate() {
        let hd = eq.h_dd[i] + lambda;
        *d = (eq.b_d[i] - eq.v[i].dot(&dp)) / hd;
    }
    Some((dp, dd))
}

/// Minimizes the sum of squared reprojection residuals over source frames by
/// damped Gauss-Newton, eliminating the block-diagonal inverse-depth Hessian
/// with a Schur complement. `poses[0]` is held fixed as the gauge.
pub fn solve_dba(problem: &DbaProblem, config: &SolverConfig) -> Result<DbaSolution, DbaError> {
    problem.validate()?;
    let lay = layout(problem);
    let mut state = DbaState::from_problem(problem);
    let n_obs: usize = problem
        .sources
        .iter()
        .map(|s| s.targets.iter().flatten().count())
        .sum();

    let mut lambda = config.damping.max(1e-15);
    let mut cost = total_cost(&state, problem);
    if !cost.is_finite() {
        return Err(DbaError::DegenerateGeometry("non-finite initial cost".into()));
    }
    let mut iterations = 0;
    let mut converged = false;
    let abs_tol = 1e-20 * n_obs.max(1) as f64;

    for outer in 0..config.max_iters {
        let eq = assemble(&state, problem, &lay);
        if outer == 0 {
            // All-zero depth Jacobians mean zero baseline to every source.
            // That is fatal when the poses cannot move to create one: either
            // they are not optimized, or the residuals are already zero so
            // no step will separate them.
            let max_hdd = eq.h_dd.iter().cloned().fold(0.0_f64, f64::max);
            let poses_can_move = lay.pose_cols.iter().any(Option::is_some);
            if max_hdd < 1e-18 && (!poses_can_move || cost <= abs_tol) {
                return Err(DbaError::DegenerateGeometry(
                    "inverse depth unobservable (zero baseline)".into(),
                ));
            }
        }
        if cost <= abs_tol {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda <= MAX_DAMPING {
            let Some((dp, dd)) = schur_step(&eq, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = apply_step(&state, problem, &lay, &dp, &dd);
            let new_cost = total_cost(&candidate, problem);
            if new_cost.is_finite() && new_cost <= cost {
                let rel_drop = (cost - new_cost) / cost.max(1e-300);
                state = candidate;
                cost = new_cost;
                iterations += 1;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if rel_drop < config.tol || cost <= abs_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            if lambda > MAX_DAMPING && iterations == 0 && cost > abs_tol {
                return Err(DbaError::DegenerateGeometry(
                    "normal equations singular beyond damping".into(),
                ));
            }
            break;
        }
        if converged {
            break;
        }
    }

    Ok(DbaSolution {
        poses: state.poses.clone(),
        intrinsics: state
            .cam
            .to_intrinsics(problem.intrinsics.width, problem.intrinsics.height)?,
        pixels: problem.pixels.clone(),
        inv_depth: state.inv_depth,
        final_cost: cost,
        iterations,
        converged,
    })
}

// ---- diagnostics -----------------------------------------------------

/// Stacked residual vector in a fixed (source-major, pixel-minor) order.
pub fn residual_vector(problem: &DbaProblem, state: &DbaState) -> DVector<f64> {
    let mut out = Vec::new();
    for src in &problem.sources {
        for (i, target) in src.targets.iter().enumerate() {
            let Some(target) = target else { continue };
            let eval = eval_obs(state, &problem.pixels[i], state.inv_depth[i], src.frame_index, target);
            out.push(eval.residual.x);
            out.push(eval.residual.y);
        }
    }
    DVector::from_vec(out)
}

/// Dense analytic Jacobian over [free poses | intrinsics | inverse depths],
/// rows matching [`residual_vector`]. Intended for small problems in tests.
pub fn analytic_jacobian_dense(problem: &DbaProblem, state: &DbaState) -> DMatrix<f64> {
    let lay = layout(problem);
    let n = problem.pixels.len();
    let n_obs: usize = problem
        .sources
        .iter()
        .map(|s| s.targets.iter().flatten().count())
        .sum();
    let mut jac = DMatrix::zeros(2 * n_obs, lay.dim + n);
    let mut jp = DMatrix::zeros(2, lay.dim);
    let mut row = 0;
    for (s, src) in problem.sources.iter().enumerate() {
        for (i, target) in src.targets.iter().enumerate() {
            let Some(target) = target else { continue };
            let eval = eval_obs(state, &problem.pixels[i], state.inv_depth[i], src.frame_index, target);
            jp.fill(0.0);
            let jd = obs_jacobian(state, problem, &lay, i, s, &eval, &mut jp);
            for r in 0..2 {
                for c in 0..lay.dim {
                    jac[(row + r, c)] = jp[(r, c)];
                }
                jac[(row + r, lay.dim + i)] = jd[r];
            }
            row += 2;
        }
    }
    jac
}

/// Applies a packed delta over [free poses | intrinsics | inverse depths],
/// matching the columns of [`analytic_jacobian_dense`]. Used to drive
/// finite-difference comparisons.
pub fn apply_delta(problem: &DbaProblem, state: &DbaState, delta: &DVector<f64>) -> DbaState {
    let lay = layout(problem);
    let dp = DVector::from_iterator(lay.dim, delta.iter().take(lay.dim).cloned());
    let dd: Vec<f64> = delta.iter().skip(lay.dim).cloned().collect();
    let mut next = state.clone();
    for (i, col) in lay.pose_cols.iter().enumerate() {
        if let Some(col) = col {
            let dt = Vector3::new(dp[*col], dp[col + 1], dp[col + 2]);
            let dtheta = Vector3::new(dp[col + 3], dp[col + 4], dp[col + 5]);
            next.poses[i] = state.poses[i].left_update(&dt, &dtheta);
        }
    }
    if let Some(col) = lay.intr_col {
        next.cam.fx += dp[col];
        next.cam.fy += dp[col + 1];
        next.cam.cx += dp[col + 2];
        next.cam.cy += dp[col + 3];
    }
    for (d, delta) in next.inv_depth.iter_mut().zip(&dd) {
        *d += *delta;
    }
    next
}
