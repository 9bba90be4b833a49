//! Residuals and noise models for the odometry, bounding-box and
//! orientation factors.

use nalgebra::{DMatrix, DVector, SVector, Vector4, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    conic_bbox, project_quadric, BoundingBox2D, CameraIntrinsics, ConstrainedDualQuadric,
    GeometryError, Pose,
};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("noise standard deviations must be positive and finite")]
    InvalidNoise,
    #[error("orientation residual requested for an unassigned target")]
    UnassignedTarget,
    #[error("variable kind does not match the factor")]
    VariableMismatch,
}

/// Diagonal Gaussian noise, stored as per-dimension standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel<T: Real> {
    sigmas: DVector<T>,
}

impl<T: Real> NoiseModel<T> {
    pub fn diagonal(sigmas: &[T]) -> Result<Self, FactorError> {
        if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(FactorError::InvalidNoise);
        }
        Ok(Self { sigmas: DVector::from_column_slice(sigmas) })
    }

    pub fn isotropic(dim: usize, sigma: T) -> Result<Self, FactorError> {
        Self::diagonal(&vec![sigma; dim])
    }

    pub fn dim(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigmas(&self) -> &DVector<T> {
        &self.sigmas
    }

    pub fn whiten(&self, r: &DVector<T>) -> DVector<T> {
        r.component_div(&self.sigmas)
    }

    /// Divides row `i` of `jacobian` by `sigma_i`.
    pub fn whiten_jacobian(&self, jacobian: &mut DMatrix<T>) {
        for (i, mut row) in jacobian.row_iter_mut().enumerate() {
            row /= self.sigmas[i];
        }
    }

    /// Squared Mahalanobis norm `rᵀ Σ⁻¹ r`.
    pub fn mahalanobis_sq(&self, r: &DVector<T>) -> T {
        self.whiten(r).norm_squared()
    }
}

/// Robust loss applied to whitened residuals. Only the plain quadratic loss
/// is implemented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustKernel {
    #[default]
    None,
}

/// Expected global orientation of a landmark's major axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationTarget {
    /// Major axis perpendicular to world z, `g = 0`.
    Horizontal,
    /// Major axis along world z, `g = 1`.
    Vertical,
    Unassigned,
}

impl OrientationTarget {
    pub fn value<T: Real>(&self) -> Option<T> {
        match self {
            Self::Horizontal => Some(T::zero()),
            Self::Vertical => Some(T::one()),
            Self::Unassigned => None,
        }
    }

    pub fn is_assigned(&self) -> bool {
        !matches!(self, Self::Unassigned)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Horizontal => "horizontal",
            Self::Vertical => "vertical",
            Self::Unassigned => "unassigned",
        }
    }
}

impl std::str::FromStr for OrientationTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "horizontal" => Ok(Self::Horizontal),
            "vertical" => Ok(Self::Vertical),
            "unassigned" => Ok(Self::Unassigned),
            other => Err(format!("unknown orientation '{other}'")),
        }
    }
}

/// `log(x_next⁻¹ · f(x_i, u_i))` in `(omega, rho)` coordinates.
pub fn odometry_residual<T: Real>(x_i: &Pose<T>, x_next: &Pose<T>, u_i: &Pose<T>) -> Vector6<T> {
    let predicted = crate::geometry::apply_motion(x_i, u_i);
    x_next.between(&predicted).log()
}

/// `log(prior⁻¹ · x)`.
pub fn prior_residual<T: Real>(x: &Pose<T>, prior: &Pose<T>) -> Vector6<T> {
    prior.between(x).log()
}

/// Predicted image box of `quadric` seen from `pose`.
pub fn predicted_box<T: Real>(
    pose: &Pose<T>,
    quadric: &ConstrainedDualQuadric<T>,
    intrinsics: &CameraIntrinsics<T>,
) -> Result<BoundingBox2D<T>, GeometryError> {
    conic_bbox(&project_quadric(pose, intrinsics, quadric)?)
}

/// Measured minus predicted box, ordered `(xmin, ymin, xmax, ymax)`.
pub fn bbox_residual<T: Real>(
    pose: &Pose<T>,
    quadric: &ConstrainedDualQuadric<T>,
    measured: &BoundingBox2D<T>,
    intrinsics: &CameraIntrinsics<T>,
) -> Result<Vector4<T>, GeometryError> {
    let p = predicted_box(pose, quadric, intrinsics)?;
    Ok(Vector4::new(
        measured.xmin - p.xmin,
        measured.ymin - p.ymin,
        measured.xmax - p.xmax,
        measured.ymax - p.ymax,
    ))
}

/// `g(l) − c` for an assigned orientation target.
pub fn orientation_residual<T: Real>(
    quadric: &ConstrainedDualQuadric<T>,
    target: OrientationTarget,
) -> Result<T, FactorError> {
    let g = target.value::<T>().ok_or(FactorError::UnassignedTarget)?;
    Ok(g - quadric.cosine_similarity_z()?)
}

/// A solver variable: a camera pose or a quadric landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variable<T: Real> {
    Pose(Pose<T>),
    Quadric(ConstrainedDualQuadric<T>),
}

impl<T: Real> Variable<T> {
    pub const POSE_DIM: usize = 6;
    pub const QUADRIC_DIM: usize = 9;

    pub fn dim(&self) -> usize {
        match self {
            Self::Pose(_) => Self::POSE_DIM,
            Self::Quadric(_) => Self::QUADRIC_DIM,
        }
    }

    /// Applies a tangent increment; `delta.len()` must equal [`Self::dim`].
    pub fn retract(&self, delta: &[T]) -> Self {
        match self {
            Self::Pose(p) => Self::Pose(p.retract(&Vector6::from_column_slice(delta))),
            Self::Quadric(q) => Self::Quadric(q.retract(&SVector::<T, 9>::from_column_slice(delta))),
        }
    }

    pub fn as_pose(&self) -> Result<&Pose<T>, FactorError> {
        match self {
            Self::Pose(p) => Ok(p),
            Self::Quadric(_) => Err(FactorError::VariableMismatch),
        }
    }

    pub fn as_quadric(&self) -> Result<&ConstrainedDualQuadric<T>, FactorError> {
        match self {
            Self::Quadric(q) => Ok(q),
            Self::Pose(_) => Err(FactorError::VariableMismatch),
        }
    }
}

/// Central-difference Jacobian of `residual` with respect to the tangent
/// spaces of `vars`, one column per tangent coordinate in variable order.
pub fn numeric_jacobian<T, E, F>(residual: F, vars: &[Variable<T>], step: T) -> Result<DMatrix<T>, E>
where
    T: Real,
    F: Fn(&[Variable<T>]) -> Result<DVector<T>, E>,
{
    let r0 = residual(vars)?;
    let total: usize = vars.iter().map(Variable::dim).sum();
    let mut jac = DMatrix::<T>::zeros(r0.len(), total);
    let mut scratch = vars.to_vec();
    let two_h = step + step;
    let mut col = 0;
    for (i, var) in vars.iter().enumerate() {
        let dim = var.dim();
        let mut delta = vec![T::zero(); dim];
        for k in 0..dim {
            delta[k] = step;
            scratch[i] = var.retract(&delta);
            let plus = residual(&scratch);
            delta[k] = -step;
            scratch[i] = var.retract(&delta);
            let minus = residual(&scratch);
            delta[k] = T::zero();
            // Fall back to a one-sided difference when a probe is degenerate.
            let column = match (plus, minus) {
                (Ok(p), Ok(m)) => (p - m) / two_h,
                (Ok(p), Err(_)) => (p - &r0) / step,
                (Err(_), Ok(m)) => (&r0 - m) / step,
                (Err(e), Err(_)) => return Err(e),
            };
            jac.set_column(col, &column);
            col += 1;
        }
        scratch[i] = *var;
    }
    Ok(jac)
}

/// Default central-difference step on tangent coordinates.
pub fn default_jacobian_step<T: Real>() -> T {
    effective_jacobian_step(1e-6)
}

/// `step` raised to at least the square root of the scalar's machine epsilon.
pub fn effective_jacobian_step<T: Real>(step: f64) -> T {
    let floor = T::default_epsilon().sqrt();
    let step: T = lit(step);
    if step < floor { floor } else { step }
}
