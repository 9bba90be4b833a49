use nalgebra::{Matrix3, Matrix3x4};
use serde::{Deserialize, Serialize};

use super::boxes::BoundingBox2D;
use super::pose::Pose;
use super::quadric::ConstrainedDualQuadric;
use super::GeometryError;
use crate::scalar::{cast, lit, to_f64, Real};

/// Minimum centroid depth (metres) for a quadric to be projected.
pub const DEPTH_EPSILON: f64 = 1e-3;

/// Pinhole intrinsics. The camera looks along +z with x right and y down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: T,
    pub height: T,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: T, height: T) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.cx > T::zero() && self.cx < self.width && self.cy > T::zero() && self.cy < self.height) {
            return Err(GeometryError::InvalidIntrinsics("principal point must lie inside the image"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<T> {
        Matrix3::new(
            self.fx, T::zero(), self.cx,
            T::zero(), self.fy, self.cy,
            T::zero(), T::zero(), T::one(),
        )
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        let c = cast::<T, U>;
        CameraIntrinsics {
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            width: c(self.width),
            height: c(self.height),
        }
    }
}

impl Default for CameraIntrinsics<f64> {
    fn default() -> Self {
        Self { fx: 320.0, fy: 320.0, cx: 320.0, cy: 240.0, width: 640.0, height: 480.0 }
    }
}

/// Homogeneous dual conic `C* = P · Q* · Pᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualConic<T: Real>(pub Matrix3<T>);

impl<T: Real> DualConic<T> {
    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    /// Scaled so that entry (2, 2) equals one.
    pub fn normalized(&self) -> Option<Matrix3<T>> {
        let w = self.0[(2, 2)];
        if w.abs() > T::default_epsilon() && w.is_finite() {
            Some(self.0 / w)
        } else {
            None
        }
    }
}

/// Projects `quadric` into the camera at `pose` (camera-to-world).
pub fn project_quadric<T: Real>(
    pose: &Pose<T>,
    intrinsics: &CameraIntrinsics<T>,
    quadric: &ConstrainedDualQuadric<T>,
) -> Result<DualConic<T>, GeometryError> {
    let world_to_cam = pose.inverse();
    let depth = world_to_cam.transform_point(&quadric.centroid()).z;
    if !(depth > lit(DEPTH_EPSILON)) {
        return Err(GeometryError::BehindCamera { depth: to_f64(depth) });
    }
    let mut rt = Matrix3x4::<T>::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&world_to_cam.rotation_matrix());
    rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&world_to_cam.translation());
    let p = intrinsics.matrix() * rt;
    let c = p * quadric.matrix() * p.transpose();
    Ok(DualConic((c + c.transpose()) * lit::<T>(0.5)))
}

/// Axis-aligned box tangent to the ellipse described by `conic`. Not clipped
/// to the image.
pub fn conic_bbox<T: Real>(conic: &DualConic<T>) -> Result<BoundingBox2D<T>, GeometryError> {
    let c = conic.normalized().ok_or(GeometryError::DegenerateConic)?;
    let dx = c[(0, 2)] * c[(0, 2)] - c[(0, 0)];
    let dy = c[(1, 2)] * c[(1, 2)] - c[(1, 1)];
    if !(dx > T::zero() && dy > T::zero()) {
        return Err(GeometryError::DegenerateConic);
    }
    let (sx, sy) = (dx.sqrt(), dy.sqrt());
    Ok(BoundingBox2D::new(c[(0, 2)] - sx, c[(1, 2)] - sy, c[(0, 2)] + sx, c[(1, 2)] + sy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn k() -> CameraIntrinsics<f64> {
        CameraIntrinsics::default()
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(320.0, 320.0, 320.0, 240.0, 640.0, 480.0).is_ok());
        assert!(CameraIntrinsics::new(-1.0, 320.0, 320.0, 240.0, 640.0, 480.0).is_err());
        assert!(CameraIntrinsics::new(320.0, 320.0, 700.0, 240.0, 640.0, 480.0).is_err());
    }

    #[test]
    fn unit_sphere_conic_centre() {
        let q = ConstrainedDualQuadric::sphere(Vector3::new(0.0, 0.0, 5.0), 1.0).unwrap();
        let c = project_quadric(&Pose::identity(), &k(), &q).unwrap();
        let n = c.normalized().unwrap();
        assert_relative_eq!(n[(0, 2)], 320.0, epsilon = 1e-9);
        assert_relative_eq!(n[(1, 2)], 240.0, epsilon = 1e-9);
        let b = conic_bbox(&c).unwrap();
        let half = 320.0 / 24f64.sqrt();
        assert_relative_eq!(b.xmin, 320.0 - half, epsilon = 1e-9);
        assert_relative_eq!(b.ymax, 240.0 + half, epsilon = 1e-9);
    }

    #[test]
    fn zero_depth_is_rejected() {
        let q = ConstrainedDualQuadric::sphere(Vector3::zeros(), 0.5).unwrap();
        assert!(matches!(
            project_quadric(&Pose::identity(), &k(), &q),
            Err(GeometryError::BehindCamera { .. })
        ));
        let q = ConstrainedDualQuadric::sphere(Vector3::new(0.0, 0.0, -3.0), 0.5).unwrap();
        assert!(project_quadric(&Pose::identity(), &k(), &q).is_err());
    }

    #[test]
    fn camera_enclosed_by_quadric_gives_degenerate_conic() {
        // Centroid in front but the camera sits inside the ellipsoid.
        let q = ConstrainedDualQuadric::sphere(Vector3::new(0.0, 0.0, 0.5), 2.0).unwrap();
        let c = project_quadric(&Pose::identity(), &k(), &q).unwrap();
        assert_eq!(conic_bbox(&c), Err(GeometryError::DegenerateConic));
    }
}
