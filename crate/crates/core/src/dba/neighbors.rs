use crate::geometry::Pose;

/// Thresholds for good-neighbor frame selection.
#[derive(Debug, Clone, Copy)]
pub struct NeighborConfig {
    /// Minimum relative baseline in meters.
    pub tau_baseline: f64,
    /// Facing-angle threshold in radians, compared per `facing_greater`.
    pub tau_facing: f64,
    /// Number of neighbors to return; fewer survivors yields an empty result.
    pub tau_nb: usize,
    /// Compare θ_facing > τ_facing when true (the written form of the
    /// selection rule); the direction is configurable since a maximum-angle
    /// reading is also defensible.
    pub facing_greater: bool,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        Self {
            tau_baseline: 0.05,
            tau_facing: 0.0,
            tau_nb: 2,
            facing_greater: true,
        }
    }
}

/// Selects triangulation-friendly neighbor frames for a reference pose.
///
/// Per candidate j the relative transform `T_ji = G_i⁻¹ G_j` gives the
/// baseline `‖t_ji‖` and the facing angle `arccos(z·R_ji·z)`. Candidates
/// passing both thresholds are ranked by the xy-plane component of their
/// baseline, largest first; if fewer than `tau_nb` survive, the selection is
/// empty (the caller skips depth estimation for this frame).
pub fn select_neighbors(
    candidates: &[(usize, Pose)],
    reference: &Pose,
    cfg: &NeighborConfig,
) -> Vec<usize> {
    let mut kept: Vec<(usize, f64)> = Vec::new();
    let inv_ref = reference.inverse();
    for (id, pose) in candidates {
        let t_ji = inv_ref.compose(pose);
        let baseline = t_ji.translation().norm();
        let r = t_ji.rotation_matrix();
        let facing = r[(2, 2)].clamp(-1.0, 1.0).acos();
        let facing_ok = if cfg.facing_greater {
            facing > cfg.tau_facing
        } else {
            facing < cfg.tau_facing
        };
        if baseline > cfg.tau_baseline && facing_ok {
            let t = t_ji.translation();
            let xy = (t.x * t.x + t.y * t.y).sqrt();
            kept.push((*id, xy));
        }
    }
    if kept.len() < cfg.tau_nb {
        return Vec::new();
    }
    kept.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    kept.truncate(cfg.tau_nb);
    kept.into_iter().map(|(id, _)| id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};

    fn posed(t: [f64; 3], yaw: f64) -> Pose {
        Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::y() * yaw),
            Vector3::new(t[0], t[1], t[2]),
        )
    }

    #[test]
    fn candidate_passing_both_thresholds_is_kept() {
        let reference = Pose::identity();
        let cfg = NeighborConfig {
            tau_baseline: 0.1,
            tau_facing: 5.0_f64.to_radians(),
            tau_nb: 1,
            facing_greater: true,
        };
        // baseline 0.3 m, facing 10°
        let cand = vec![(7usize, posed([0.3, 0.0, 0.0], 10.0_f64.to_radians()))];
        assert_eq!(select_neighbors(&cand, &reference, &cfg), vec![7]);
    }

    #[test]
    fn fewer_survivors_than_tau_nb_returns_empty() {
        let reference = Pose::identity();
        let cfg = NeighborConfig {
            tau_baseline: 0.1,
            tau_facing: 0.01,
            tau_nb: 2,
            facing_greater: true,
        };
        let cand = vec![
            (0usize, posed([0.3, 0.0, 0.0], 0.2)),
            (1usize, posed([0.01, 0.0, 0.0], 0.2)), // baseline too small
        ];
        assert!(select_neighbors(&cand, &reference, &cfg).is_empty());
    }

    #[test]
    fn survivors_sorted_by_xy_baseline() {
        let reference = Pose::identity();
        let cfg = NeighborConfig {
            tau_baseline: 0.05,
            tau_facing: 0.01,
            tau_nb: 2,
            facing_greater: true,
        };
        let cand = vec![
            (10usize, posed([0.3, 0.0, 0.0], 0.1)),
            (11usize, posed([0.5, 0.0, 0.0], 0.1)),
            (12usize, posed([0.1, 0.0, 0.0], 0.1)),
        ];
        assert_eq!(select_neighbors(&cand, &reference, &cfg), vec![11, 10]);
    }

    #[test]
    fn z_only_baseline_ranks_below_xy_baseline() {
        let reference = Pose::identity();
        let cfg = NeighborConfig {
            tau_baseline: 0.05,
            tau_facing: 0.01,
            tau_nb: 1,
            facing_greater: true,
        };
        let cand = vec![
            (0usize, posed([0.0, 0.0, 0.6], 0.1)), // big baseline, no xy
            (1usize, posed([0.2, 0.1, 0.0], 0.1)),
        ];
        assert_eq!(select_neighbors(&cand, &reference, &cfg), vec![1]);
    }

    #[test]
    fn facing_comparison_direction_is_configurable() {
        let reference = Pose::identity();
        let mut cfg = NeighborConfig {
            tau_baseline: 0.05,
            tau_facing: 0.2,
            tau_nb: 1,
            facing_greater: true,
        };
        let cand = vec![(3usize, posed([0.3, 0.0, 0.0], 0.1))];
        assert!(select_neighbors(&cand, &reference, &cfg).is_empty());
        cfg.facing_greater = false;
        assert_eq!(select_neighbors(&cand, &reference, &cfg), vec![3]);
    }
}
