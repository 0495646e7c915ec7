use nalgebra::{Matrix3, Vector2};

use crate::geometry::{Grid, Intrinsics};

use super::essential::epipolar_dist_sq;
use super::{CorrespondenceError, EpipolarModel, Epipole, FlowField, STATIC_CHECK_THRESHOLD_SQ};

/// Forward/backward consistency mask: pixel passes when walking the forward
/// flow and the bilinearly sampled backward flow returns within `threshold`
/// pixels of the start. Out-of-bounds targets and invalid pixels fail.
pub fn cross_check(
    fwd: &FlowField,
    bwd: &FlowField,
    threshold: f64,
) -> Result<Grid<bool>, CorrespondenceError> {
    if fwd.width() != bwd.width() || fwd.height() != bwd.height() {
        return Err(CorrespondenceError::SizeMismatch(
            fwd.width(),
            fwd.height(),
            bwd.width(),
            bwd.height(),
        ));
    }
    Ok(Grid::from_fn(fwd.width(), fwd.height(), |x, y| {
        let Some(target) = fwd.target(x, y) else {
            return false;
        };
        let Some(back) = bwd.sample(target[0], target[1]) else {
            return false;
        };
        let rx = target[0] + back[0] - x as f64;
        let ry = target[1] + back[1] - y as f64;
        (rx * rx + ry * ry).sqrt() < threshold
    }))
}

pub fn fundamental_from_essential(
    e: &Matrix3<f64>,
    k_i: &Intrinsics,
    k_j: &Intrinsics,
) -> Matrix3<f64> {
    let inv = |k: &Intrinsics| {
        Matrix3::new(
            1.0 / k.fx, 0.0, -k.cx / k.fx,
            0.0, 1.0 / k.fy, -k.cy / k.fy,
            0.0, 0.0, 1.0,
        )
    };
    inv(k_j).transpose() * e * inv(k_i)
}

/// Epipolar consistency mask: a correspondence passes when the squared pixel
/// distance of the target to its epipolar line is below 3.84 (chi-square,
/// 1 dof, 95%). Non-rigid motion violates this and is filtered out.
pub fn static_check(
    fwd: &FlowField,
    model: &EpipolarModel,
    k_i: &Intrinsics,
    k_j: &Intrinsics,
) -> Grid<bool> {
    let f = fundamental_from_essential(&model.essential, k_i, k_j);
    Grid::from_fn(fwd.width(), fwd.height(), |x, y| {
        let Some(target) = fwd.target(x, y) else {
            return false;
        };
        let xi = Vector2::new(x as f64, y as f64);
        let xj = Vector2::new(target[0], target[1]);
        epipolar_dist_sq(&f, &xi, &xj) < STATIC_CHECK_THRESHOLD_SQ
    })
}

/// Masks out the disk of `radius` pixels around the in-image epipole, where
/// the epipolar test is uninformative. All-ones when the epipole lies at
/// infinity or outside the image bounds.
pub fn epipole_check(model: &EpipolarModel, k: &Intrinsics, radius: f64) -> Grid<bool> {
    let epipole = match model.epipole {
        Epipole::AtInfinity => None,
        Epipole::Finite(e) => k.contains(&e).then_some(e),
    };
    Grid::from_fn(k.width, k.height, |x, y| match epipole {
        None => true,
        Some(e) => {
            let dx = x as f64 - e.x;
            let dy = y as f64 - e.y;
            (dx * dx + dy * dy).sqrt() >= radius
        }
    })
}

/// Pointwise AND of filter masks.
pub fn combine_masks(masks: &[&Grid<bool>]) -> Grid<bool> {
    assert!(!masks.is_empty());
    Grid::from_fn(masks[0].width(), masks[0].height(), |x, y| {
        masks.iter().all(|m| *m.get(x, y))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_flow(w: usize, h: usize, o: [f64; 2]) -> FlowField {
        FlowField::new(Grid::filled(w, h, o), Grid::filled(w, h, true))
    }

    #[test]
    fn cross_check_accepts_small_residual() {
        // fwd sends (10,10)→(20,10); bwd returns (−9.8,0): residual 0.2
        let mut fwd = FlowField::invalid(32, 32);
        fwd.offsets.set(10, 10, [10.0, 0.0]);
        fwd.validity.set(10, 10, true);
        let bwd = constant_flow(32, 32, [-9.8, 0.0]);
        let mask = cross_check(&fwd, &bwd, 0.5).unwrap();
        assert!(*mask.get(10, 10));
    }

    #[test]
    fn cross_check_rejects_large_residual() {
        let mut fwd = FlowField::invalid(32, 32);
        fwd.offsets.set(10, 10, [10.0, 0.0]);
        fwd.validity.set(10, 10, true);
        let bwd = constant_flow(32, 32, [-9.3, 0.0]);
        let mask = cross_check(&fwd, &bwd, 0.5).unwrap();
        assert!(!*mask.get(10, 10));
    }

    #[test]
    fn cross_check_zero_flow_all_pass() {
        let fwd = FlowField::zero(16, 12);
        let bwd = FlowField::zero(16, 12);
        let mask = cross_check(&fwd, &bwd, 0.5).unwrap();
        assert!(mask.data().iter().all(|v| *v));
    }

    #[test]
    fn cross_check_size_mismatch() {
        let fwd = FlowField::zero(16, 12);
        let bwd = FlowField::zero(12, 16);
        assert!(matches!(
            cross_check(&fwd, &bwd, 0.5),
            Err(CorrespondenceError::SizeMismatch(..))
        ));
    }

    #[test]
    fn epipole_disk_is_excluded() {
        let k = Intrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
        let model = EpipolarModel {
            essential: Matrix3::identity(),
            epipole: Epipole::Finite(Vector2::new(10.0, 10.0)),
            inlier_count: 0,
        };
        let mask = epipole_check(&model, &k, 20.0);
        assert!(!*mask.get(25, 10), "distance 15 < 20 must be masked");
        assert!(*mask.get(40, 10), "distance 30 keeps the pixel");
    }

    #[test]
    fn epipole_at_infinity_keeps_everything() {
        let k = Intrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
        let model = EpipolarModel {
            essential: Matrix3::identity(),
            epipole: Epipole::AtInfinity,
            inlier_count: 0,
        };
        let mask = epipole_check(&model, &k, 20.0);
        assert!(mask.data().iter().all(|v| *v));
    }

    #[test]
    fn static_check_boundary_is_strict() {
        // E = [t]x for t = (0,0,1): epipolar line of normalized (x,y) is
        // (-y, x, 0); in pixels the distance scales by f.
        let k = Intrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
        let e = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let model = EpipolarModel {
            essential: e,
            epipole: Epipole::Finite(Vector2::new(32.0, 24.0)),
            inlier_count: 0,
        };
        // radial flow stays on the epipolar line through the principal point
        let offsets = Grid::from_fn(64, 48, |x, y| {
            [(x as f64 - 32.0) * 0.1, (y as f64 - 24.0) * 0.1]
        });
        let fwd = FlowField::new(offsets, Grid::filled(64, 48, true));
        let mask = static_check(&fwd, &model, &k, &k);
        assert!(*mask.get(50, 24));
        assert!(*mask.get(10, 40));

        // a perpendicular 5 px offset must fail: 25 > 3.84
        let mut bad = fwd.clone();
        bad.offsets.set(50, 24, [(50.0f64 - 32.0) * 0.1, 5.0]);
        let mask = static_check(&bad, &model, &k, &k);
        assert!(!*mask.get(50, 24));

        // exactly 1.96 px: 3.8416 is not (strictly) below 3.84
        let mut edge = fwd.clone();
        edge.offsets.set(50, 24, [(50.0f64 - 32.0) * 0.1, 1.96]);
        let mask = static_check(&edge, &model, &k, &k);
        assert!(!*mask.get(50, 24));
    }

    proptest! {
        /// For exact-inverse constant flows the check is symmetric in
        /// (fwd, bwd) and passes everywhere in the overlap.
        #[test]
        fn cross_check_symmetric_for_exact_inverses(
            ox in -3.0f64..3.0,
            oy in -3.0f64..3.0,
        ) {
            let fwd = constant_flow(24, 20, [ox, oy]);
            let bwd = constant_flow(24, 20, [-ox, -oy]);
            let ab = cross_check(&fwd, &bwd, 0.5).unwrap();
            let ba = cross_check(&bwd, &fwd, 0.5).unwrap();
            for (x, y, v) in ab.iter() {
                let tx = x as f64 + ox;
                let ty = y as f64 + oy;
                let in_bounds = tx >= 0.0 && ty >= 0.0 && tx <= 23.0 && ty <= 19.0;
                prop_assert_eq!(*v, in_bounds);
            }
            // relabeling frames swaps the roles but keeps the rule
            for (x, y, v) in ba.iter() {
                let tx = x as f64 - ox;
                let ty = y as f64 - oy;
                let in_bounds = tx >= 0.0 && ty >= 0.0 && tx <= 23.0 && ty <= 19.0;
                prop_assert_eq!(*v, in_bounds);
            }
        }

        /// Combined mask is contained in each individual mask.
        #[test]
        fn combined_mask_is_intersection(bits in prop::collection::vec(prop::bool::ANY, 12)) {
            let a = Grid::from_fn(4, 3, |x, y| bits[y * 4 + x]);
            let b = Grid::from_fn(4, 3, |x, y| bits[(y * 4 + x + 5) % 12]);
            let c = combine_masks(&[&a, &b]);
            for (x, y, v) in c.iter() {
                prop_assert_eq!(*v, *a.get(x, y) && *b.get(x, y));
                if *v {
                    prop_assert!(*a.get(x, y));
                    prop_assert!(*b.get(x, y));
                }
            }
        }
    }
}
