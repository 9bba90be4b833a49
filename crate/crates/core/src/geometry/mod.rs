//! Rigid poses, constrained dual quadrics and their perspective projection.

mod boxes;
mod camera;
mod eigen;
mod pose;
mod quadric;

pub use boxes::{BoundingBox2D, Box3D};
pub use camera::{conic_bbox, project_quadric, CameraIntrinsics, DualConic, DEPTH_EPSILON};
pub use eigen::{symmetric_eigen3, SymmetricEigen3};
pub use pose::{apply_motion, compose, so3_exp, Pose};
pub use quadric::{ConstrainedDualQuadric, DEGENERATE_AXIS_GAP};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("quadric centroid is behind the camera (depth {depth:.6} m)")]
    BehindCamera { depth: f64 },
    #[error("projected conic is not a proper ellipse")]
    DegenerateConic,
    #[error("major axis is ill-defined (relative eigenvalue gap {gap:.3e})")]
    DegenerateShape { gap: f64 },
    #[error("semi-axis lengths must be strictly positive and finite")]
    NonPositiveShape,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("matrix is not a valid ellipsoid dual quadric")]
    NotAnEllipsoid,
}
