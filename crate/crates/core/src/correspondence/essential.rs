use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::Intrinsics;

use super::{FlowField, CorrespondenceError, STATIC_CHECK_THRESHOLD_SQ};

/// Epipole position in the reference image, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epipole {
    Finite(Vector2<f64>),
    AtInfinity,
}

/// Essential matrix for `x_j^T E x_i = 0` over normalized camera coordinates,
/// together with the reference-image epipole.
#[derive(Debug, Clone)]
pub struct EpipolarModel {
    pub essential: Matrix3<f64>,
    pub epipole: Epipole,
    pub inlier_count: usize,
}

const RANSAC_ITERS: usize = 256;

struct Correspondence {
    xi: Vector2<f64>,
    xj: Vector2<f64>,
    ni: Vector2<f64>,
    nj: Vector2<f64>,
}

fn normalized(k: &Intrinsics, px: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new((px.x - k.cx) / k.fx, (px.y - k.cy) / k.fy)
}

/// Hartley conditioning transform: centroid to origin, mean distance √2.
fn conditioning<'a>(points: impl Iterator<Item = &'a Vector2<f64>> + Clone) -> Matrix3<f64> {
    let mut mean = Vector2::zeros();
    let mut n = 0usize;
    for p in points.clone() {
        mean += p;
        n += 1;
    }
    mean /= n as f64;
    let mut dist = 0.0;
    for p in points {
        dist += (p - mean).norm();
    }
    dist /= n as f64;
    let scale = if dist > 1e-12 {
        std::f64::consts::SQRT_2 / dist
    } else {
        1.0
    };
    Matrix3::new(scale, 0.0, -scale * mean.x, 0.0, scale, -scale * mean.y, 0.0, 0.0, 1.0)
}

/// Hartley-normalized least-squares solve of `x_j^T E x_i = 0` followed by
/// projection onto the essential manifold (singular values 1, 1, 0).
fn solve_eight_point(points: &[(&Vector2<f64>, &Vector2<f64>)]) -> Option<Matrix3<f64>> {
    let n = points.len();
    if n < 8 {
        return None;
    }
    let ti = conditioning(points.iter().map(|p| p.0));
    let tj = conditioning(points.iter().map(|p| p.1));

    let mut ata = nalgebra::SMatrix::<f64, 9, 9>::zeros();
    for (pi, pj) in points {
        let a = ti * Vector3::new(pi.x, pi.y, 1.0);
        let b = tj * Vector3::new(pj.x, pj.y, 1.0);
        let row = [
            b.x * a.x,
            b.x * a.y,
            b.x,
            b.y * a.x,
            b.y * a.y,
            b.y,
            a.x,
            a.y,
            1.0,
        ];
        for r in 0..9 {
            for c in 0..9 {
                ata[(r, c)] += row[r] * row[c];
            }
        }
    }
    let eig = SymmetricEigen::new(ata);
    let mut best = 0;
    for k in 1..9 {
        if eig.eigenvalues[k] < eig.eigenvalues[best] {
            best = k;
        }
    }
    let e = eig.eigenvectors.column(best);
    let raw = Matrix3::new(e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8]);
    let denorm = tj.transpose() * raw * ti;

    let svd = denorm.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    Some(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * vt)
}

/// Squared point-to-epipolar-line distance in pixels of (x_i, x_j) under F.
pub(super) fn epipolar_dist_sq(f: &Matrix3<f64>, xi: &Vector2<f64>, xj: &Vector2<f64>) -> f64 {
    let line = f * Vector3::new(xi.x, xi.y, 1.0);
    let denom = line.x * line.x + line.y * line.y;
    if denom < 1e-30 {
        return f64::INFINITY;
    }
    let num = line.x * xj.x + line.y * xj.y + line.z;
    num * num / denom
}

fn fundamental(e: &Matrix3<f64>, k_i: &Intrinsics, k_j: &Intrinsics) -> Matrix3<f64> {
    let ki_inv = Matrix3::new(
        1.0 / k_i.fx, 0.0, -k_i.cx / k_i.fx,
        0.0, 1.0 / k_i.fy, -k_i.cy / k_i.fy,
        0.0, 0.0, 1.0,
    );
    let kj_inv = Matrix3::new(
        1.0 / k_j.fx, 0.0, -k_j.cx / k_j.fx,
        0.0, 1.0 / k_j.fy, -k_j.cy / k_j.fy,
        0.0, 0.0, 1.0,
    );
    kj_inv.transpose() * e * ki_inv
}

fn epipole_from_fundamental(f: &Matrix3<f64>) -> Epipole {
    // right null vector of F
    let eig = SymmetricEigen::new(f.transpose() * f);
    let mut best = 0;
    for k in 1..3 {
        if eig.eigenvalues[k] < eig.eigenvalues[best] {
            best = k;
        }
    }
    let e = eig.eigenvectors.column(best).into_owned();
    let e = e / e.norm();
    if e.z.abs() < 1e-12 {
        Epipole::AtInfinity
    } else {
        Epipole::Finite(Vector2::new(e.x / e.z, e.y / e.z))
    }
}

/// Estimates the essential matrix from dense flow with RANSAC over a pool of
/// `n_samples` randomly chosen correspondences, refit on the inliers of the
/// best minimal model. Deterministic for a fixed seed.
pub fn estimate_essential(
    fwd: &FlowField,
    k_i: &Intrinsics,
    k_j: &Intrinsics,
    n_samples: usize,
    seed: u64,
) -> Result<EpipolarModel, CorrespondenceError> {
    let mut pool = Vec::new();
    let mut mags: Vec<f64> = Vec::new();
    for (x, y, valid) in fwd.validity.iter() {
        if !*valid {
            continue;
        }
        let o = fwd.offset(x, y);
        let xi = Vector2::new(x as f64, y as f64);
        let xj = Vector2::new(x as f64 + o[0], y as f64 + o[1]);
        mags.push((o[0] * o[0] + o[1] * o[1]).sqrt());
        pool.push(Correspondence {
            xi,
            xj,
            ni: normalized(k_i, &xi),
            nj: normalized(k_j, &xj),
        });
    }
    if pool.len() < 8 {
        return Err(CorrespondenceError::DegenerateGeometry(format!(
            "only {} valid correspondences",
            pool.len()
        )));
    }
    // Sub-pixel flow everywhere means no usable parallax signal.
    mags.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let q95 = mags[(mags.len() - 1) * 95 / 100];
    if q95 < 0.5 {
        return Err(CorrespondenceError::DegenerateGeometry(
            "flow magnitudes below half a pixel".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if pool.len() > n_samples.max(8) {
        let keep = rand::seq::index::sample(&mut rng, pool.len(), n_samples.max(8));
        let mut subset = Vec::with_capacity(n_samples);
        let mut sorted: Vec<usize> = keep.into_iter().collect();
        sorted.sort_unstable();
        for idx in sorted {
            subset.push(Correspondence {
                xi: pool[idx].xi,
                xj: pool[idx].xj,
                ni: pool[idx].ni,
                nj: pool[idx].nj,
            });
        }
        pool = subset;
    }

    // Truncated-quadratic (MSAC) scoring, lower is better: a model whose
    // inliers sit exactly on their epipolar lines beats any compromise model
    // that admits a few extra points at nonzero distance, which a plain
    // consensus count cannot distinguish.
    let score = |e: &Matrix3<f64>| -> (f64, usize, Vec<bool>) {
        let f = fundamental(e, k_i, k_j);
        let mut flags = vec![false; pool.len()];
        let mut count = 0;
        let mut total = 0.0;
        for (idx, c) in pool.iter().enumerate() {
            let d2 = epipolar_dist_sq(&f, &c.xi, &c.xj);
            if d2 < STATIC_CHECK_THRESHOLD_SQ {
                flags[idx] = true;
                count += 1;
                total += d2;
            } else {
                total += STATIC_CHECK_THRESHOLD_SQ;
            }
        }
        (total, count, flags)
    };

    let mut best: Option<(f64, usize, Vec<bool>, Matrix3<f64>)> = None;
    for _ in 0..RANSAC_ITERS {
        let draw = rand::seq::index::sample(&mut rng, pool.len(), 8);
        let minimal: Vec<(&Vector2<f64>, &Vector2<f64>)> =
            draw.iter().map(|i| (&pool[i].ni, &pool[i].nj)).collect();
        let Some(e) = solve_eight_point(&minimal) else {
            continue;
        };
        let (total, count, flags) = score(&e);
        if best.as_ref().is_none_or(|(t, _, _, _)| total < *t) {
            best = Some((total, count, flags, e));
        }
    }
    let (mut best_total, count, flags, e) = best.ok_or_else(|| {
        CorrespondenceError::DegenerateGeometry("all minimal solves failed".into())
    })?;
    if count < 8 {
        return Err(CorrespondenceError::DegenerateGeometry(format!(
            "only {count} inliers"
        )));
    }

    // Iterated least-squares refit on the consensus set; stray admissions of
    // the minimal model drop out within a round or two.
    let mut essential = e;
    let mut best_flags = flags;
    let mut inlier_count = count;
    for _ in 0..3 {
        let inlier_pts: Vec<(&Vector2<f64>, &Vector2<f64>)> = pool
            .iter()
            .zip(&best_flags)
            .filter(|(_, keep)| **keep)
            .map(|(c, _)| (&c.ni, &c.nj))
            .collect();
        let Some(refined) = solve_eight_point(&inlier_pts) else {
            break;
        };
        let (refined_total, refined_count, refined_flags) = score(&refined);
        if refined_total > best_total {
            break;
        }
        let unchanged = refined_flags == best_flags;
        essential = refined;
        best_flags = refined_flags;
        best_total = refined_total;
        inlier_count = refined_count;
        if unchanged {
            break;
        }
    }

    let f = fundamental(&essential, k_i, k_j);
    Ok(EpipolarModel {
        essential,
        epipole: epipole_from_fundamental(&f),
        inlier_count,
    })
}
