use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{ColorImage, DepthImage, Grid, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no overlapping valid pixels or pose pairs")]
    EmptyOverlap,
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
}

/// PSNR cap used where the MSE is exactly zero.
pub const PSNR_CAP: f64 = 99.0;

/// Inlier ratio threshold: a pixel is an inlier when
/// max(est/gt, gt/est) < 1.03.
const INLIER_RATIO: f64 = 1.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    /// Mean of |est − gt| / gt over jointly valid pixels.
    pub absrel: f64,
    /// Fraction of jointly valid pixels within ratio 1.03 of ground truth.
    pub inlier_ratio: f64,
    pub valid_count: usize,
}

/// Median of gt/est over jointly valid pixels; multiplying the estimate by
/// this aligns it to ground-truth scale.
pub fn median_scale(est: &DepthImage, gt: &DepthImage) -> Option<f64> {
    let mut ratios = Vec::new();
    for (x, y, v) in gt.validity.iter() {
        if !*v || !est.is_valid(x, y) {
            continue;
        }
        ratios.push(gt.depth(x, y).unwrap() / est.depth(x, y).unwrap());
    }
    if ratios.is_empty() {
        return None;
    }
    ratios.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Some(ratios[ratios.len() / 2])
}

pub fn depth_metrics(
    est: &DepthImage,
    gt: &DepthImage,
    median_align: bool,
) -> Result<DepthMetrics, MetricsError> {
    if est.width() != gt.width() || est.height() != gt.height() {
        return Err(MetricsError::ShapeMismatch(
            est.width(),
            est.height(),
            gt.width(),
            gt.height(),
        ));
    }
    let scale = if median_align {
        median_scale(est, gt).ok_or(MetricsError::EmptyOverlap)?
    } else {
        1.0
    };
    let mut absrel_sum = 0.0;
    let mut inliers = 0usize;
    let mut count = 0usize;
    for (x, y, v) in gt.validity.iter() {
        if !*v || !est.is_valid(x, y) {
            continue;
        }
        let g = gt.depth(x, y).unwrap();
        let e = est.depth(x, y).unwrap() * scale;
        absrel_sum += (e - g).abs() / g;
        let ratio = (e / g).max(g / e);
        if ratio < INLIER_RATIO {
            inliers += 1;
        }
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::EmptyOverlap);
    }
    Ok(DepthMetrics {
        absrel: absrel_sum / count as f64,
        inlier_ratio: inliers as f64 / count as f64,
        valid_count: count,
    })
}

/// Closed-form similarity (scale, rotation, translation) minimizing
/// Σ‖gt_i − (c·R·est_i + t)‖².
fn umeyama_align(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> (f64, Matrix3<f64>, Vector3<f64>) {
    let n = est.len() as f64;
    let mean_e: Vector3<f64> = est.iter().sum::<Vector3<f64>>() / n;
    let mean_g: Vector3<f64> = gt.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_e = 0.0;
    for (e, g) in est.iter().zip(gt) {
        let ec = e - mean_e;
        let gc = g - mean_g;
        cov += gc * ec.transpose();
        var_e += ec.norm_squared();
    }
    cov /= n;
    var_e /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rot = u * s * vt;
    let scale = if var_e > 1e-18 {
        (svd.singular_values.component_mul(&Vector3::new(s[(0, 0)], s[(1, 1)], s[(2, 2)]))).sum()
            / var_e
    } else {
        1.0
    };
    let t = mean_g - rot * mean_e * scale;
    (scale, rot, t)
}

/// RMSE of trajectory positions after similarity alignment.
pub fn trajectory_ate(est: &[Pose], gt: &[Pose]) -> Result<f64, MetricsError> {
    if est.is_empty() || est.len() != gt.len() {
        return Err(MetricsError::EmptyOverlap);
    }
    let pe: Vec<Vector3<f64>> = est.iter().map(|p| p.translation()).collect();
    let pg: Vec<Vector3<f64>> = gt.iter().map(|p| p.translation()).collect();
    let (scale, rot, t) = umeyama_align(&pe, &pg);
    let mut sq = 0.0;
    for (e, g) in pe.iter().zip(&pg) {
        sq += (g - (rot * e * scale + t)).norm_squared();
    }
    Ok((sq / pe.len() as f64).sqrt())
}

/// PSNR in dB over \[0,1\] images, optionally restricted to a mask; capped at
/// 99 dB when the images agree exactly.
pub fn psnr(
    est: &ColorImage,
    gt: &ColorImage,
    mask: Option<&Grid<bool>>,
) -> Result<f64, MetricsError> {
    if est.width() != gt.width() || est.height() != gt.height() {
        return Err(MetricsError::ShapeMismatch(
            est.width(),
            est.height(),
            gt.width(),
            gt.height(),
        ));
    }
    let mut sq = 0.0;
    let mut count = 0usize;
    for (x, y, e) in est.values.iter() {
        if let Some(m) = mask {
            if !*m.get(x, y) {
                continue;
            }
        }
        let g = gt.pixel(x, y);
        for ch in 0..3 {
            let d = e[ch] - g[ch];
            sq += d * d;
        }
        count += 3;
    }
    if count == 0 {
        return Err(MetricsError::EmptyOverlap);
    }
    let mse = sq / count as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}
