use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::bbox_residual;
use crate::geometry::{BoundingBox2D, CameraIntrinsics, ConstrainedDualQuadric, Pose};
use crate::scalar::{lit, Real};

/// Minimum number of distinct poses needed to initialize a landmark.
pub const MIN_VIEWS: usize = 3;

/// Radius of the sphere used when only the centroid can be recovered.
pub const FALLBACK_RADIUS: f64 = 0.2;

const MIN_ENVELOPE_EIGENVALUE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InitError {
    #[error("landmark seen from {views} poses, at least {MIN_VIEWS} required")]
    InsufficientViews { views: usize },
    #[error("viewing rays do not determine a point")]
    Unconstrained,
    #[error("pose index {0} out of range")]
    UnknownPose(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Planes,
    Triangulated,
}

fn projection<T: Real>(pose: &Pose<T>, k: &CameraIntrinsics<T>) -> Matrix3x4<T> {
    let w = pose.inverse();
    let mut rt = Matrix3x4::<T>::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&w.rotation_matrix());
    rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&w.translation());
    k.matrix() * rt
}

/// Fits a dual quadric tangent to the planes back-projected from every box
/// edge.
fn fit_planes<T: Real>(
    obs: &[(Pose<T>, BoundingBox2D<T>)],
    k: &CameraIntrinsics<T>,
) -> Option<ConstrainedDualQuadric<T>> {
    // Recentre on the mean camera position for conditioning.
    let n: T = lit(obs.len() as f64);
    let origin = obs.iter().fold(Vector3::zeros(), |a, (p, _)| a + p.translation()) / n;
    let shift = Pose::from_translation(-origin);
    let mut a = DMatrix::<T>::zeros(4 * obs.len(), 10);
    let mut row = 0;
    for (pose, b) in obs {
        let p = projection(&shift.compose(pose), k);
        let (o, z) = (T::one(), T::zero());
        let lines = [
            Vector3::new(o, z, -b.xmin),
            Vector3::new(o, z, -b.xmax),
            Vector3::new(z, o, -b.ymin),
            Vector3::new(z, o, -b.ymax),
        ];
        for l in lines {
            let pi: Vector4<T> = p.transpose() * l;
            let pi = pi / pi.norm();
            let two: T = lit(2.0);
            let coeffs = [
                pi[0] * pi[0],
                two * pi[0] * pi[1],
                two * pi[0] * pi[2],
                two * pi[0] * pi[3],
                pi[1] * pi[1],
                two * pi[1] * pi[2],
                two * pi[1] * pi[3],
                pi[2] * pi[2],
                two * pi[2] * pi[3],
                pi[3] * pi[3],
            ];
            for (c, v) in coeffs.into_iter().enumerate() {
                a[(row, c)] = v;
            }
            row += 1;
        }
    }
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let imin = eig.eigenvalues.imin();
    let q = eig.eigenvectors.column(imin);
    #[rustfmt::skip]
    let m = Matrix4::new(
        q[0], q[1], q[2], q[3],
        q[1], q[4], q[5], q[6],
        q[2], q[5], q[7], q[8],
        q[3], q[6], q[8], q[9],
    );
    let local = ConstrainedDualQuadric::from_matrix_clamped(&m, Some(lit(MIN_ENVELOPE_EIGENVALUE))).ok()?;
    Some(local.with_centroid(local.centroid() + origin))
}

/// Least-squares intersection of the rays through the box centres.
fn triangulate<T: Real>(obs: &[(Pose<T>, BoundingBox2D<T>)], k: &CameraIntrinsics<T>) -> Option<Vector3<T>> {
    let mut lhs = Matrix3::<T>::zeros();
    let mut rhs = Vector3::<T>::zeros();
    for (pose, b) in obs {
        let (u, v) = b.center();
        let d_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, T::one());
        let d = pose.rotation_matrix() * d_cam.normalize();
        let proj = Matrix3::identity() - d * d.transpose();
        lhs += proj;
        rhs += proj * pose.translation();
    }
    let eig = crate::geometry::symmetric_eigen3(&lhs);
    if !(eig.values[2] > lit::<T>(1e-9) * eig.values[0]) {
        return None;
    }
    lhs.try_inverse().map(|inv| inv * rhs)
}

fn reprojection_cost<T: Real>(
    q: &ConstrainedDualQuadric<T>,
    obs: &[(Pose<T>, BoundingBox2D<T>)],
    k: &CameraIntrinsics<T>,
) -> Option<T> {
    let mut cost = T::zero();
    for (pose, b) in obs {
        let r = bbox_residual(pose, q, b, k).ok()?;
        if !r.iter().all(|x| x.is_finite()) {
            return None;
        }
        cost += r.norm_squared();
    }
    Some(cost)
}

/// Initializes one landmark from its detections.
///
/// Tries a linear fit to the box-edge planes and a sphere of radius
/// [`FALLBACK_RADIUS`] at the triangulated box centres, keeping whichever
/// reprojects with the smaller box error.
pub fn initialize_quadric<T: Real>(
    poses: &[Pose<T>],
    detections: &[(usize, BoundingBox2D<T>)],
    intrinsics: &CameraIntrinsics<T>,
) -> Result<(ConstrainedDualQuadric<T>, InitMethod), InitError> {
    let mut obs = Vec::with_capacity(detections.len());
    for (i, b) in detections {
        let pose = poses.get(*i).ok_or(InitError::UnknownPose(*i))?;
        obs.push((*pose, *b));
    }
    let views = detections.iter().map(|d| d.0).collect::<std::collections::BTreeSet<_>>().len();
    if views < MIN_VIEWS {
        return Err(InitError::InsufficientViews { views });
    }
    let planes = fit_planes(&obs, intrinsics)
        .and_then(|q| reprojection_cost(&q, &obs, intrinsics).map(|c| (q, c)));
    let sphere = triangulate(&obs, intrinsics)
        .and_then(|c| ConstrainedDualQuadric::sphere(c, lit(FALLBACK_RADIUS)).ok())
        .map(|q| {
            let c = reprojection_cost(&q, &obs, intrinsics);
            (q, c)
        });
    match (planes, sphere) {
        (Some((q, c)), Some((_, Some(cs)))) if c <= cs => Ok((q, InitMethod::Planes)),
        (Some((q, _)), None) => Ok((q, InitMethod::Planes)),
        (_, Some((q, _))) => Ok((q, InitMethod::Triangulated)),
        (None, None) => Err(InitError::Unconstrained),
    }
}

/// Runs [`initialize_quadric`] for every landmark.
pub fn initialize_quadrics<T: Real>(
    poses: &[Pose<T>],
    observations: &BTreeMap<u64, Vec<(usize, BoundingBox2D<T>)>>,
    intrinsics: &CameraIntrinsics<T>,
) -> BTreeMap<u64, Result<(ConstrainedDualQuadric<T>, InitMethod), InitError>> {
    observations
        .iter()
        .map(|(id, dets)| (*id, initialize_quadric(poses, dets, intrinsics)))
        .collect()
}
