use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::GeometryError;

/// Rigid camera-to-world transform stored as unit quaternion + translation.
///
/// Matrices are derived on demand so repeated composition does not
/// accumulate renormalization drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds from a raw (x, y, z, w) quaternion, checking unit length to 1e-9.
    pub fn from_quat_xyzw(
        qx: f64,
        qy: f64,
        qz: f64,
        qw: f64,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let q = nalgebra::Quaternion::new(qw, qx, qy, qz);
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NonUnitQuaternion(norm));
        }
        Ok(Self {
            rotation: UnitQuaternion::from_quaternion(q),
            translation,
        })
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.inverse();
        Pose {
            rotation: inv_rot,
            translation: -(inv_rot * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Relative transform mapping `self`-frame coordinates into `other`-frame
    /// coordinates: `other⁻¹ ∘ self`.
    pub fn relative_to(&self, other: &Pose) -> Pose {
        other.inverse().compose(self)
    }

    /// Left perturbation `exp(δθ, δt) ∘ self` used by the solvers: the point
    /// map changes as `w ↦ w + δθ × w + δt` to first order.
    pub fn left_update(&self, dt: &Vector3<f64>, dtheta: &Vector3<f64>) -> Pose {
        let delta = Pose {
            rotation: UnitQuaternion::from_scaled_axis(*dtheta),
            translation: *dt,
        };
        delta.compose(self)
    }

    /// Geodesic rotation distance in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Quaternion as (x, y, z, w), for serialization.
    pub fn quat_xyzw(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }
}
