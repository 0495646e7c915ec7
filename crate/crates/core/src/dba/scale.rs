use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::DepthImage;

use super::DbaError;

#[derive(Debug, Clone, Copy)]
pub struct ScaleConfig {
    pub iterations: usize,
    /// A landmark is an inlier when |z_l / z̄ · s − 1| < inlier_tol.
    pub inlier_tol: f64,
    pub seed: u64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            iterations: 256,
            inlier_tol: 0.05,
            seed: 0,
        }
    }
}

/// Recovers the scale aligning an estimated depth image to metric landmark
/// depths by RANSAC over the one-parameter model `z_l / z̄ · s = 1`, refit as
/// the median ratio over the best consensus set. Deterministic per seed.
pub fn recover_scale(
    landmarks: &[(Vector2<f64>, f64)],
    estimated: &DepthImage,
    cfg: &ScaleConfig,
) -> Result<f64, DbaError> {
    let mut ratios = Vec::new();
    for (pixel, z_l) in landmarks {
        if !z_l.is_finite() || *z_l <= 0.0 {
            continue;
        }
        let x = pixel.x.round();
        let y = pixel.y.round();
        if x < 0.0 || y < 0.0 {
            continue;
        }
        let (x, y) = (x as usize, y as usize);
        if x >= estimated.width() || y >= estimated.height() {
            continue;
        }
        if let Some(z_est) = estimated.depth(x, y) {
            ratios.push(z_est / z_l);
        }
    }
    if ratios.len() < 3 {
        return Err(DbaError::InsufficientLandmarks(ratios.len()));
    }

    let consensus = |s: f64| -> usize {
        // |z_l/z̄·s − 1| = |s/r − 1|
        ratios
            .iter()
            .filter(|r| (s / *r - 1.0).abs() < cfg.inlier_tol)
            .count()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_s = ratios[0];
    let mut best_count = consensus(best_s);
    for _ in 0..cfg.iterations {
        let s = ratios[rng.random_range(0..ratios.len())];
        let count = consensus(s);
        if count > best_count {
            best_count = count;
            best_s = s;
        }
    }

    let mut inliers: Vec<f64> = ratios
        .iter()
        .copied()
        .filter(|r| (best_s / r - 1.0).abs() < cfg.inlier_tol)
        .collect();
    inliers.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(inliers[inliers.len() / 2])
}
