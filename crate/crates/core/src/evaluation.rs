//! Trajectory and landmark accuracy metrics.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::OrientationTarget;
use crate::geometry::{Box3D, ConstrainedDualQuadric, Pose};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("trajectory lengths differ: {estimated} estimated vs {truth} ground truth")]
    LengthMismatch { estimated: usize, truth: usize },
    #[error("at least two poses are required")]
    TooShort,
    #[error("landmark {0} has no ground truth")]
    UnmatchedLandmark(u64),
    #[error("no landmarks to evaluate")]
    NoLandmarks,
}

/// Rigid transform minimizing `Σ ‖R·a_i + t − b_i‖²`.
pub fn rigid_alignment<T: Real>(a: &[Vector3<T>], b: &[Vector3<T>]) -> (Matrix3<T>, Vector3<T>) {
    let n: T = lit(a.len() as f64);
    let ma = a.iter().fold(Vector3::zeros(), |s, p| s + p) / n;
    let mb = b.iter().fold(Vector3::zeros(), |s, p| s + p) / n;
    let mut cov = Matrix3::<T>::zeros();
    for (p, q) in a.iter().zip(b) {
        cov += (q - mb) * (p - ma).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    }
    let r = u * d * vt;
    (r, mb - r * ma)
}

/// Absolute trajectory error: RMSE of camera positions, optionally after
/// best-fit rigid alignment of the estimate onto the ground truth.
pub fn ate<T: Real>(estimated: &[Pose<T>], truth: &[Pose<T>], align: bool) -> Result<T, EvalError> {
    if estimated.len() != truth.len() {
        return Err(EvalError::LengthMismatch { estimated: estimated.len(), truth: truth.len() });
    }
    if estimated.len() < 2 {
        return Err(EvalError::TooShort);
    }
    let a: Vec<Vector3<T>> = estimated.iter().map(Pose::translation).collect();
    let b: Vec<Vector3<T>> = truth.iter().map(Pose::translation).collect();
    let (r, t) = if align { rigid_alignment(&a, &b) } else { (Matrix3::identity(), Vector3::zeros()) };
    let sum = a.iter().zip(&b).fold(T::zero(), |s, (p, q)| s + (r * p + t - q).norm_squared());
    Ok((sum / lit(a.len() as f64)).sqrt())
}

type Matched<'a, T> = Vec<(&'a ConstrainedDualQuadric<T>, &'a Box3D<T>)>;

fn matched<'a, T: Real>(
    estimates: &'a BTreeMap<u64, ConstrainedDualQuadric<T>>,
    truth: &'a BTreeMap<u64, Box3D<T>>,
) -> Result<Matched<'a, T>, EvalError> {
    if estimates.is_empty() {
        return Err(EvalError::NoLandmarks);
    }
    estimates
        .iter()
        .map(|(id, q)| truth.get(id).map(|b| (q, b)).ok_or(EvalError::UnmatchedLandmark(*id)))
        .collect()
}

/// RMSE between estimated centroids and ground-truth box centres.
pub fn landmark_position_error<T: Real>(
    estimates: &BTreeMap<u64, ConstrainedDualQuadric<T>>,
    truth: &BTreeMap<u64, Box3D<T>>,
) -> Result<T, EvalError> {
    let pairs = matched(estimates, truth)?;
    let sum = pairs.iter().fold(T::zero(), |s, (q, b)| s + (q.centroid() - b.center).norm_squared());
    Ok((sum / lit(pairs.len() as f64)).sqrt())
}

/// Mean Jaccard distance between origin-centred bounding boxes.
pub fn landmark_shape_error<T: Real>(
    estimates: &BTreeMap<u64, ConstrainedDualQuadric<T>>,
    truth: &BTreeMap<u64, Box3D<T>>,
) -> Result<T, EvalError> {
    let pairs = matched(estimates, truth)?;
    let sum = pairs.iter().fold(T::zero(), |s, (q, b)| s + shape_distance(q, b));
    Ok(sum / lit(pairs.len() as f64))
}

/// Mean Jaccard distance between world-frame bounding boxes.
pub fn landmark_quality_error<T: Real>(
    estimates: &BTreeMap<u64, ConstrainedDualQuadric<T>>,
    truth: &BTreeMap<u64, Box3D<T>>,
) -> Result<T, EvalError> {
    let pairs = matched(estimates, truth)?;
    let sum = pairs.iter().fold(T::zero(), |s, (q, b)| s + quality_distance(q, b));
    Ok(sum / lit(pairs.len() as f64))
}

pub fn shape_distance<T: Real>(q: &ConstrainedDualQuadric<T>, truth: &Box3D<T>) -> T {
    T::one() - q.aabb().centered().iou(&truth.centered())
}

pub fn quality_distance<T: Real>(q: &ConstrainedDualQuadric<T>, truth: &Box3D<T>) -> T {
    T::one() - q.aabb().iou(truth)
}

/// Angle in degrees between the major axis and the direction its category
/// prefers: the z-axis for vertical targets, the horizontal plane for
/// horizontal ones. `None` for unassigned targets or degenerate shapes.
pub fn axis_prior_deviation_deg<T: Real>(q: &ConstrainedDualQuadric<T>, target: OrientationTarget) -> Option<T> {
    let c = q.cosine_similarity_z().ok()?.min(T::one());
    let angle = match target {
        OrientationTarget::Vertical => c.acos(),
        OrientationTarget::Horizontal => c.asin(),
        OrientationTarget::Unassigned => return None,
    };
    Some(angle * lit(180.0) / T::pi())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkMetrics {
    pub id: u64,
    pub label: String,
    pub target: OrientationTarget,
    pub position_m: f64,
    pub shape: f64,
    pub quality: f64,
    pub cosine_z: Option<f64>,
    pub axis_deviation_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub seed: u64,
    pub config_hash: String,
    pub ate_m: f64,
    pub landmark_position_m: f64,
    pub landmark_shape: f64,
    pub landmark_quality: f64,
    /// Mean over landmarks with an assigned orientation target.
    pub axis_deviation_deg: Option<f64>,
    /// Ground-truth landmarks without an estimate.
    pub missing_landmarks: usize,
    pub landmarks: Vec<LandmarkMetrics>,
}

/// Ground truth needed to score an estimate.
#[derive(Debug, Clone)]
pub struct Truth<'a> {
    pub poses: &'a [Pose<f64>],
    pub boxes: BTreeMap<u64, Box3D<f64>>,
    pub labels: BTreeMap<u64, (String, OrientationTarget)>,
}

/// Computes every metric for one estimate.
pub fn evaluate(
    poses: &[Pose<f64>],
    quadrics: &BTreeMap<u64, ConstrainedDualQuadric<f64>>,
    truth: &Truth<'_>,
    align: bool,
) -> Result<MetricReport, EvalError> {
    let ate_m = ate(poses, truth.poses, align)?;
    let pairs = matched(quadrics, &truth.boxes)?;
    let mut landmarks = Vec::with_capacity(pairs.len());
    for ((id, q), (_, b)) in quadrics.iter().zip(&pairs) {
        let (label, target) = truth.labels.get(id).cloned().unwrap_or((String::new(), OrientationTarget::Unassigned));
        landmarks.push(LandmarkMetrics {
            id: *id,
            label,
            target,
            position_m: (q.centroid() - b.center).norm(),
            shape: shape_distance(q, b),
            quality: quality_distance(q, b),
            cosine_z: q.cosine_similarity_z().ok(),
            axis_deviation_deg: axis_prior_deviation_deg(q, target),
        });
    }
    let devs: Vec<f64> = landmarks.iter().filter_map(|l| l.axis_deviation_deg).collect();
    Ok(MetricReport {
        seed: 0,
        config_hash: String::new(),
        ate_m,
        landmark_position_m: landmark_position_error(quadrics, &truth.boxes)?,
        landmark_shape: landmark_shape_error(quadrics, &truth.boxes)?,
        landmark_quality: landmark_quality_error(quadrics, &truth.boxes)?,
        axis_deviation_deg: (!devs.is_empty()).then(|| devs.iter().sum::<f64>() / devs.len() as f64),
        missing_landmarks: truth.boxes.keys().filter(|id| !quadrics.contains_key(id)).count(),
        landmarks,
    })
}
