use nalgebra::{Matrix3, Matrix4, SVector, UnitQuaternion, Vector3};

use super::boxes::Box3D;
use super::eigen::symmetric_eigen3;
use super::GeometryError;
use crate::scalar::{cast, lit, to_f64, Real};

/// Relative eigenvalue gap `(λ1 − λ2) / λ1` below which the major axis is
/// considered undefined.
pub const DEGENERATE_AXIS_GAP: f64 = 1e-6;

/// Ellipsoid landmark in dual form, `Q* = Z · diag(s², −1) · Zᵀ`.
///
/// The rotation is held as a unit quaternion so solver updates can be
/// applied in the tangent space; the 9-vector `(θ, t, s)` with Z-Y-X Euler
/// angles is available through [`Self::from_vector9`] and [`Self::to_vector9`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedDualQuadric<T: Real> {
    rotation: UnitQuaternion<T>,
    centroid: Vector3<T>,
    radii: Vector3<T>,
}

impl<T: Real> ConstrainedDualQuadric<T> {
    pub fn new(
        rotation: UnitQuaternion<T>,
        centroid: Vector3<T>,
        radii: Vector3<T>,
    ) -> Result<Self, GeometryError> {
        if radii.iter().any(|r| !(*r > T::zero()) || !r.is_finite()) {
            return Err(GeometryError::NonPositiveShape);
        }
        Ok(Self { rotation, centroid, radii })
    }

    pub fn sphere(centroid: Vector3<T>, radius: T) -> Result<Self, GeometryError> {
        Self::new(UnitQuaternion::identity(), centroid, Vector3::repeat(radius))
    }

    /// `q = (θ1, θ2, θ3, t1, t2, t3, s1, s2, s3)` with `R(θ) = Rz(θ3)·Ry(θ2)·Rx(θ1)`.
    pub fn from_vector9(q: &[T; 9]) -> Result<Self, GeometryError> {
        let rotation = UnitQuaternion::from_euler_angles(q[0], q[1], q[2]);
        Self::new(rotation, Vector3::new(q[3], q[4], q[5]), Vector3::new(q[6], q[7], q[8]))
    }

    pub fn to_vector9(&self) -> [T; 9] {
        let (r, p, y) = self.rotation.euler_angles();
        let t = self.centroid;
        let s = self.radii;
        [r, p, y, t.x, t.y, t.z, s.x, s.y, s.z]
    }

    pub fn rotation(&self) -> UnitQuaternion<T> {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn centroid(&self) -> Vector3<T> {
        self.centroid
    }

    pub fn radii(&self) -> Vector3<T> {
        self.radii
    }

    pub fn with_centroid(&self, centroid: Vector3<T>) -> Self {
        Self { centroid, ..*self }
    }

    pub fn with_rotation(&self, rotation: UnitQuaternion<T>) -> Self {
        Self { rotation, ..*self }
    }

    /// Full 4×4 dual quadric matrix.
    pub fn matrix(&self) -> Matrix4<T> {
        let mut z = Matrix4::<T>::identity();
        z.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        z.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.centroid);
        let s2 = self.radii.component_mul(&self.radii);
        let core = Matrix4::from_diagonal(&nalgebra::Vector4::new(s2.x, s2.y, s2.z, -T::one()));
        let q = z * core * z.transpose();
        (q + q.transpose()) * lit::<T>(0.5)
    }

    /// Origin-centred envelope `R · diag(s²) · Rᵀ`.
    pub fn envelope(&self) -> Matrix3<T> {
        let r = self.rotation_matrix();
        let s2 = self.radii.component_mul(&self.radii);
        let m = r * Matrix3::from_diagonal(&s2) * r.transpose();
        (m + m.transpose()) * lit::<T>(0.5)
    }

    /// Unit eigenvector of the envelope with the largest eigenvalue, with its
    /// largest-magnitude component made positive.
    pub fn major_axis(&self) -> Result<Vector3<T>, GeometryError> {
        let eig = symmetric_eigen3(&self.envelope());
        let (l1, l2) = (eig.values[0], eig.values[1]);
        let gap = (l1 - l2) / l1;
        if gap < lit(DEGENERATE_AXIS_GAP) {
            return Err(GeometryError::DegenerateShape { gap: to_f64(gap) });
        }
        Ok(canonical_sign(eig.vectors.column(0).into_owned()))
    }

    /// Bounded cosine similarity `|m · z|` between the major axis and world z.
    pub fn cosine_similarity_z(&self) -> Result<T, GeometryError> {
        let m = self.major_axis()?;
        Ok((m.z / m.norm()).abs())
    }

    /// Tight world-axis-aligned box enclosing the ellipsoid.
    pub fn aabb(&self) -> Box3D<T> {
        let env = self.envelope();
        let half = Vector3::new(env[(0, 0)].sqrt(), env[(1, 1)].sqrt(), env[(2, 2)].sqrt());
        Box3D { center: self.centroid, half_extents: half }
    }

    /// Applies a tangent increment `(δω, δt, δlog s)`.
    pub fn retract(&self, delta: &SVector<T, 9>) -> Self {
        let dw = Vector3::new(delta[0], delta[1], delta[2]);
        let dt = Vector3::new(delta[3], delta[4], delta[5]);
        let ds = Vector3::new(delta[6].exp(), delta[7].exp(), delta[8].exp());
        Self {
            rotation: self.rotation * UnitQuaternion::from_scaled_axis(dw),
            centroid: self.centroid + dt,
            radii: self.radii.component_mul(&ds),
        }
    }

    /// Tangent increment `d` with `self.retract(d) == other`.
    pub fn local(&self, other: &Self) -> SVector<T, 9> {
        let dw = (self.rotation.inverse() * other.rotation).scaled_axis();
        let dt = other.centroid - self.centroid;
        let ds = other.radii.component_div(&self.radii).map(|v| v.ln());
        SVector::<T, 9>::from_iterator(dw.iter().chain(dt.iter()).chain(ds.iter()).copied())
    }

    /// Recovers the constrained parameters from a 4×4 dual quadric.
    pub fn from_matrix(q: &Matrix4<T>) -> Result<Self, GeometryError> {
        Self::from_matrix_clamped(q, None)
    }

    /// Like [`Self::from_matrix`], but envelope eigenvalues below `min_eig`
    /// are raised to it instead of being rejected.
    pub fn from_matrix_clamped(q: &Matrix4<T>, min_eig: Option<T>) -> Result<Self, GeometryError> {
        let q = (q + q.transpose()) * lit::<T>(0.5);
        let w = q[(3, 3)];
        if !(w.abs() > T::default_epsilon()) || !w.is_finite() {
            return Err(GeometryError::NotAnEllipsoid);
        }
        let q = q / (-w);
        let t: Vector3<T> = -q.fixed_view::<3, 1>(0, 3).into_owned();
        let env = q.fixed_view::<3, 3>(0, 0).into_owned() + t * t.transpose();
        let eig = symmetric_eigen3(&env);
        let mut values = eig.values;
        for v in values.iter_mut() {
            match min_eig {
                Some(floor) if *v < floor => *v = floor,
                None if !(*v > T::zero()) => return Err(GeometryError::NotAnEllipsoid),
                _ => {}
            }
        }
        let mut vectors = eig.vectors;
        if vectors.determinant() < T::zero() {
            let c = -vectors.column(2).into_owned();
            vectors.set_column(2, &c);
        }
        let rot = nalgebra::Rotation3::from_matrix_unchecked(vectors);
        let radii = values.map(|v| v.sqrt());
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), t, radii)
    }

    pub fn cast<U: Real>(&self) -> ConstrainedDualQuadric<U> {
        ConstrainedDualQuadric {
            rotation: UnitQuaternion::new_unchecked(nalgebra::Quaternion::from(self.rotation.coords.map(cast))),
            centroid: self.centroid.map(cast),
            radii: self.radii.map(cast),
        }
    }
}

fn canonical_sign<T: Real>(v: Vector3<T>) -> Vector3<T> {
    let mut idx = 0;
    for k in 1..3 {
        if v[k].abs() > v[idx].abs() {
            idx = k;
        }
    }
    if v[idx] < T::zero() {
        -v
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn quadric(theta: [f64; 3], t: [f64; 3], s: [f64; 3]) -> ConstrainedDualQuadric<f64> {
        ConstrainedDualQuadric::from_vector9(&[
            theta[0], theta[1], theta[2], t[0], t[1], t[2], s[0], s[1], s[2],
        ])
        .unwrap()
    }

    #[test]
    fn unit_sphere_matrix() {
        let q = quadric([0.0; 3], [0.0; 3], [1.0; 3]);
        let expected = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 1.0, -1.0));
        assert_relative_eq!(q.matrix(), expected, epsilon = 1e-15);
    }

    // Z·diag(1,1,1,−1)·Zᵀ with Z = [I t; 0 1] expands to [[I − t tᵀ, −t], [−tᵀ, −1]].
    #[test]
    fn translated_sphere_block_form() {
        let q = quadric([0.3, 0.2, -0.5], [0.0, 0.0, 5.0], [1.0; 3]);
        let expected = Matrix4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, -24.0, -5.0,
            0.0, 0.0, -5.0, -1.0,
        );
        assert_relative_eq!(q.matrix(), expected, epsilon = 1e-12);
    }

    #[test]
    fn rejects_nonpositive_radii() {
        let r = ConstrainedDualQuadric::from_vector9(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(r.unwrap_err(), GeometryError::NonPositiveShape);
    }

    #[test]
    fn envelope_examples() {
        let q = quadric([0.0; 3], [4.0, 5.0, 6.0], [1.0, 2.0, 3.0]);
        assert_relative_eq!(q.envelope(), Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0)), epsilon = 1e-15);
        let q = quadric([0.7, -0.2, 1.3], [0.0; 3], [1.0; 3]);
        assert_relative_eq!(q.envelope(), Matrix3::identity(), epsilon = 1e-12);
        let q = quadric([FRAC_PI_2, 0.0, 0.0], [0.0; 3], [1.0, 2.0, 3.0]);
        assert_relative_eq!(q.envelope(), Matrix3::from_diagonal(&Vector3::new(1.0, 9.0, 4.0)), epsilon = 1e-12);
    }

    #[test]
    fn major_axis_examples() {
        let q = quadric([0.0; 3], [0.0; 3], [1.0, 2.0, 3.0]);
        assert_relative_eq!(q.major_axis().unwrap(), Vector3::z(), epsilon = 1e-12);
        let q = quadric([0.0; 3], [0.0; 3], [3.0, 2.0, 1.0]);
        assert_relative_eq!(q.major_axis().unwrap(), Vector3::x(), epsilon = 1e-12);
        let q = quadric([0.0, FRAC_PI_4, 0.0], [0.0; 3], [1.0, 1.0, 2.0]);
        let m = q.major_axis().unwrap();
        assert_relative_eq!(m.x.abs(), FRAC_1_SQRT_2, epsilon = 1e-9);
        assert_relative_eq!(m.y, 0.0, epsilon = 1e-9);
        assert_relative_eq!(m.z.abs(), FRAC_1_SQRT_2, epsilon = 1e-9);
    }

    #[test]
    fn sphere_has_no_major_axis() {
        let q = quadric([0.1, 0.2, 0.3], [0.0; 3], [0.5; 3]);
        assert!(matches!(q.major_axis(), Err(GeometryError::DegenerateShape { .. })));
        assert!(q.cosine_similarity_z().is_err());
    }

    #[test]
    fn cosine_similarity_examples() {
        assert_relative_eq!(quadric([0.0; 3], [0.0; 3], [1.0, 2.0, 3.0]).cosine_similarity_z().unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(quadric([0.0; 3], [0.0; 3], [3.0, 2.0, 1.0]).cosine_similarity_z().unwrap(), 0.0, epsilon = 1e-12);
        let q = quadric([0.0, FRAC_PI_4, 0.0], [0.0; 3], [1.0, 1.0, 2.0]);
        assert_relative_eq!(q.cosine_similarity_z().unwrap(), 0.70710678, epsilon = 1e-8);
    }

    #[test]
    fn aabb_examples() {
        let q = quadric([0.0; 3], [0.0; 3], [1.0, 2.0, 3.0]);
        assert_relative_eq!(q.aabb().half_extents, Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-12);
        let q = quadric([0.4, 1.0, -2.0], [0.0; 3], [0.7; 3]);
        assert_relative_eq!(q.aabb().half_extents, Vector3::repeat(0.7), epsilon = 1e-12);
    }

    // Oracle: maximise each world coordinate over densely sampled surface points.
    #[test]
    fn rotated_aabb_matches_surface_sampling() {
        let q = quadric([0.0, 0.0, FRAC_PI_4], [0.0; 3], [2.0, 1.0, 1.0]);
        let r = q.rotation_matrix();
        let mut max = Vector3::<f64>::zeros();
        let n = 600;
        for i in 0..=n {
            let phi = std::f64::consts::PI * i as f64 / n as f64;
            for j in 0..(2 * n) {
                let lam = std::f64::consts::PI * j as f64 / n as f64;
                let local = Vector3::new(2.0 * phi.sin() * lam.cos(), phi.sin() * lam.sin(), phi.cos());
                max = max.sup(&(r * local).abs());
            }
        }
        let half = q.aabb().half_extents;
        assert_relative_eq!(half, Vector3::new(2.5f64.sqrt(), 2.5f64.sqrt(), 1.0), epsilon = 1e-12);
        assert_relative_eq!(half, max, epsilon = 1e-4);
    }

    #[test]
    fn retract_local_roundtrip() {
        let q = quadric([0.2, -0.4, 1.0], [1.0, 2.0, 3.0], [0.3, 0.5, 0.7]);
        let d = SVector::<f64, 9>::from_column_slice(&[0.1, -0.05, 0.2, 0.3, -0.1, 0.05, 0.2, -0.3, 0.1]);
        let q2 = q.retract(&d);
        assert_relative_eq!(q.local(&q2), d, epsilon = 1e-12);
        assert!(q2.radii().iter().all(|r| *r > 0.0));
    }

    proptest! {
        #[test]
        fn matrix_roundtrip(
            a in -3.0f64..3.0, b in -1.5f64..1.5, c in -3.0f64..3.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
            s1 in 0.05f64..3.0, s2 in 0.05f64..3.0, s3 in 0.05f64..3.0,
        ) {
            let q = quadric([a, b, c], [tx, ty, tz], [s1, s2, s3]);
            let back = ConstrainedDualQuadric::from_matrix(&q.matrix()).unwrap();
            prop_assert!((back.matrix() - q.matrix()).abs().max() < 1e-8);
            let m = q.matrix();
            prop_assert!((m - m.transpose()).abs().max() < 1e-9);
        }

        #[test]
        fn envelope_eigen_consistency(
            a in -3.0f64..3.0, b in -1.5f64..1.5, c in -3.0f64..3.0,
            s1 in 0.05f64..3.0, s2 in 0.05f64..3.0, s3 in 0.05f64..3.0,
        ) {
            let q = quadric([a, b, c], [0.0; 3], [s1, s2, s3]);
            let env = q.envelope();
            let lmax = s1.max(s2).max(s3).powi(2);
            if let Ok(m) = q.major_axis() {
                prop_assert!((env * m - m * lmax).norm() < 1e-8);
            }
            let chol = env.cholesky();
            prop_assert!(chol.is_some());
        }

        #[test]
        fn major_axis_rotation_equivariant(
            a in -3.0f64..3.0, b in -1.5f64..1.5, c in -3.0f64..3.0,
            ra in -3.0f64..3.0, rb in -1.5f64..1.5, rc in -3.0f64..3.0,
        ) {
            let q = quadric([a, b, c], [0.0; 3], [0.3, 0.6, 1.2]);
            let rot = UnitQuaternion::from_euler_angles(ra, rb, rc);
            let rotated = q.with_rotation(rot * q.rotation());
            let lhs = rotated.major_axis().unwrap();
            let rhs = rot * q.major_axis().unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-8 || (lhs + rhs).norm() < 1e-8);
        }

        #[test]
        fn cosine_similarity_translation_invariant(
            tx in -50.0f64..50.0, ty in -50.0f64..50.0, tz in -50.0f64..50.0,
        ) {
            let q = quadric([0.3, 0.9, -0.2], [0.0; 3], [0.2, 0.4, 0.9]);
            let moved = q.with_centroid(Vector3::new(tx, ty, tz));
            prop_assert_eq!(q.cosine_similarity_z().unwrap(), moved.cosine_similarity_z().unwrap());
        }
    }
}
