use nalgebra::{Isometry3, Matrix3, Point3, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::scalar::{cast, lit, Real};

/// Rigid body transform in SE(3).
///
/// For camera poses the transform maps camera coordinates into the world
/// frame (camera-to-world). Tangent vectors are ordered `(omega, rho)`:
/// rotation first, translation second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Pose<T: Real> {
    iso: Isometry3<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self { iso: Isometry3::identity() }
    }

    pub fn new(rotation: UnitQuaternion<T>, translation: Vector3<T>) -> Self {
        Self { iso: Isometry3::from_parts(Translation3::from(translation), rotation) }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a pose from a rotation matrix, re-orthonormalising it.
    pub fn from_rotation_matrix(rotation: &Matrix3<T>, translation: Vector3<T>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix(rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    pub fn from_isometry(iso: Isometry3<T>) -> Self {
        Self { iso }
    }

    pub fn isometry(&self) -> &Isometry3<T> {
        &self.iso
    }

    pub fn rotation(&self) -> UnitQuaternion<T> {
        self.iso.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        self.iso.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> Vector3<T> {
        self.iso.translation.vector
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { iso: self.iso * other.iso }
    }

    pub fn inverse(&self) -> Self {
        Self { iso: self.iso.inverse() }
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.iso.transform_point(&Point3::from(*p)).coords
    }

    /// Expresses `other` in the frame of `self`: `self⁻¹ · other`.
    pub fn between(&self, other: &Self) -> Self {
        self.inverse().compose(other)
    }

    /// SE(3) exponential map of `(omega, rho)`.
    pub fn exp(xi: &Vector6<T>) -> Self {
        let omega = Vector3::new(xi[0], xi[1], xi[2]);
        let rho = Vector3::new(xi[3], xi[4], xi[5]);
        let rotation = UnitQuaternion::from_scaled_axis(omega);
        let t = left_jacobian(&omega) * rho;
        Self::new(rotation, t)
    }

    /// SE(3) logarithm map, inverse of [`Pose::exp`].
    pub fn log(&self) -> Vector6<T> {
        let omega = self.iso.rotation.scaled_axis();
        let rho = left_jacobian_inverse(&omega) * self.translation();
        Vector6::new(omega[0], omega[1], omega[2], rho[0], rho[1], rho[2])
    }

    /// Right perturbation `self · exp(delta)`.
    pub fn retract(&self, delta: &Vector6<T>) -> Self {
        self.compose(&Self::exp(delta))
    }

    /// Tangent vector `d` such that `self.retract(d) == other`.
    pub fn local(&self, other: &Self) -> Vector6<T> {
        self.between(other).log()
    }

    /// On-disk record `[tx, ty, tz, qw, qx, qy, qz]`.
    pub fn to_record(&self) -> [T; 7] {
        let t = self.translation();
        let q = self.iso.rotation.quaternion();
        [t.x, t.y, t.z, q.w, q.i, q.j, q.k]
    }

    /// Inverse of [`Pose::to_record`]. A quaternion already of unit norm
    /// (within 1e-12 relative) is taken verbatim so records round-trip
    /// bit-exactly.
    pub fn from_record(r: &[T; 7]) -> Option<Self> {
        let q = nalgebra::Quaternion::new(r[3], r[4], r[5], r[6]);
        let n = q.norm();
        if !(n > T::zero()) || !n.is_finite() {
            return None;
        }
        let rotation = if (n - T::one()).abs() < lit(1e-12) {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Some(Self::new(rotation, Vector3::new(r[0], r[1], r[2])))
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        let q = nalgebra::Quaternion::from(self.iso.rotation.coords.map(cast));
        Pose::new(UnitQuaternion::new_unchecked(q), self.translation().map(cast))
    }
}

/// Group composition `a · b`.
pub fn compose<T: Real>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    a.compose(b)
}

/// Motion model: applies the body-frame increment `u` to `x`.
pub fn apply_motion<T: Real>(x: &Pose<T>, u: &Pose<T>) -> Pose<T> {
    x.compose(u)
}

/// SO(3) exponential map as a rotation matrix.
pub fn so3_exp<T: Real>(omega: &Vector3<T>) -> Matrix3<T> {
    UnitQuaternion::from_scaled_axis(*omega).to_rotation_matrix().into_inner()
}

fn hat<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        T::zero(), -v.z, v.y,
        v.z, T::zero(), -v.x,
        -v.y, v.x, T::zero(),
    );
    m
}

fn left_jacobian<T: Real>(omega: &Vector3<T>) -> Matrix3<T> {
    let theta2 = omega.norm_squared();
    let w = hat(omega);
    let (a, b) = if theta2 < lit(1e-10) {
        (lit::<T>(0.5) - theta2 / lit(24.0), lit::<T>(1.0 / 6.0) - theta2 / lit(120.0))
    } else {
        let theta = theta2.sqrt();
        ((T::one() - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    Matrix3::identity() + w * a + w * w * b
}

fn left_jacobian_inverse<T: Real>(omega: &Vector3<T>) -> Matrix3<T> {
    let theta2 = omega.norm_squared();
    let w = hat(omega);
    let c = if theta2 < lit(1e-10) {
        lit::<T>(1.0 / 12.0) + theta2 / lit(720.0)
    } else {
        let theta = theta2.sqrt();
        let half = theta * lit(0.5);
        (T::one() - half * half.cos() / half.sin()) / theta2
    };
    Matrix3::identity() - w * lit::<T>(0.5) + w * w * c
}
