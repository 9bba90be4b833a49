//! Factor graph over camera poses and quadric landmarks.

mod init;
mod pipeline;
mod solver;

pub use init::{initialize_quadric, initialize_quadrics, InitError, InitMethod, FALLBACK_RADIUS, MIN_VIEWS};
pub use pipeline::{solve_dataset, solve_standalone, Solution, SolveOptions};
pub use solver::{
    linearize, optimize, solve_damped, DegeneratePolicy, LinearSystem, SolveStats, SolverConfig, Termination,
};

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::factors::{
    bbox_residual, odometry_residual, orientation_residual, prior_residual, FactorError, NoiseModel,
    OrientationTarget, Variable,
};
use crate::geometry::{BoundingBox2D, CameraIntrinsics, ConstrainedDualQuadric, Pose};
use crate::scalar::{lit, Real};
use crate::semantics::{aggregate_label, orientation_target, reject_high_variance, CategoryTable, SemanticsError};
use crate::simulator::NoiseConfig;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("inconsistent dataset: {0}")]
    InconsistentDataset(String),
    #[error("no value for variable {0:?}")]
    MissingVariable(Key),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("normal equations are singular even with maximal damping")]
    SingularSystem,
    #[error("{0} factors are degenerate at the initial values")]
    DegenerateFactors(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Variable identifier. Poses sort before landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    Pose(usize),
    Landmark(u64),
}

/// Assignment of a value to every graph variable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Values<T: Real> {
    vars: BTreeMap<Key, Variable<T>>,
}

impl<T: Real> Values<T> {
    pub fn new() -> Self {
        Self { vars: BTreeMap::new() }
    }

    pub fn insert_pose(&mut self, index: usize, pose: Pose<T>) {
        self.vars.insert(Key::Pose(index), Variable::Pose(pose));
    }

    pub fn insert_quadric(&mut self, id: u64, quadric: ConstrainedDualQuadric<T>) {
        self.vars.insert(Key::Landmark(id), Variable::Quadric(quadric));
    }

    pub fn insert(&mut self, key: Key, var: Variable<T>) {
        self.vars.insert(key, var);
    }

    pub fn get(&self, key: Key) -> Option<&Variable<T>> {
        self.vars.get(&key)
    }

    pub fn pose(&self, index: usize) -> Option<&Pose<T>> {
        match self.vars.get(&Key::Pose(index)) {
            Some(Variable::Pose(p)) => Some(p),
            _ => None,
        }
    }

    pub fn quadric(&self, id: u64) -> Option<&ConstrainedDualQuadric<T>> {
        match self.vars.get(&Key::Landmark(id)) {
            Some(Variable::Quadric(q)) => Some(q),
            _ => None,
        }
    }

    /// Poses in index order.
    pub fn poses(&self) -> Vec<Pose<T>> {
        self.vars
            .values()
            .filter_map(|v| match v {
                Variable::Pose(p) => Some(*p),
                _ => None,
            })
            .collect()
    }

    pub fn quadrics(&self) -> impl Iterator<Item = (u64, &ConstrainedDualQuadric<T>)> {
        self.vars.iter().filter_map(|(k, v)| match (k, v) {
            (Key::Landmark(id), Variable::Quadric(q)) => Some((*id, q)),
            _ => None,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &Variable<T>)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// A term of the least-squares objective.
pub trait Factor<T: Real>: Send + Sync {
    fn keys(&self) -> Vec<Key>;
    fn noise(&self) -> &NoiseModel<T>;
    /// Unwhitened residual given the variables listed by [`Factor::keys`].
    fn evaluate(&self, vars: &[Variable<T>]) -> Result<DVector<T>, FactorError>;
}

#[derive(Debug, Clone)]
pub struct PriorFactor<T: Real> {
    pub pose: usize,
    pub prior: Pose<T>,
    pub noise: NoiseModel<T>,
}

#[derive(Debug, Clone)]
pub struct OdometryFactor<T: Real> {
    pub from: usize,
    pub to: usize,
    pub measurement: Pose<T>,
    pub noise: NoiseModel<T>,
}

#[derive(Debug, Clone)]
pub struct BoxFactor<T: Real> {
    pub pose: usize,
    pub landmark: u64,
    pub measured: BoundingBox2D<T>,
    pub intrinsics: CameraIntrinsics<T>,
    pub noise: NoiseModel<T>,
}

#[derive(Debug, Clone)]
pub struct OrientationFactor<T: Real> {
    pub landmark: u64,
    pub target: OrientationTarget,
    pub noise: NoiseModel<T>,
}

impl<T: Real> Factor<T> for PriorFactor<T> {
    fn keys(&self) -> Vec<Key> {
        vec![Key::Pose(self.pose)]
    }
    fn noise(&self) -> &NoiseModel<T> {
        &self.noise
    }
    fn evaluate(&self, vars: &[Variable<T>]) -> Result<DVector<T>, FactorError> {
        let r = prior_residual(vars[0].as_pose()?, &self.prior);
        Ok(DVector::from_column_slice(r.as_slice()))
    }
}

impl<T: Real> Factor<T> for OdometryFactor<T> {
    fn keys(&self) -> Vec<Key> {
        vec![Key::Pose(self.from), Key::Pose(self.to)]
    }
    fn noise(&self) -> &NoiseModel<T> {
        &self.noise
    }
    fn evaluate(&self, vars: &[Variable<T>]) -> Result<DVector<T>, FactorError> {
        let r = odometry_residual(vars[0].as_pose()?, vars[1].as_pose()?, &self.measurement);
        Ok(DVector::from_column_slice(r.as_slice()))
    }
}

impl<T: Real> Factor<T> for BoxFactor<T> {
    fn keys(&self) -> Vec<Key> {
        vec![Key::Pose(self.pose), Key::Landmark(self.landmark)]
    }
    fn noise(&self) -> &NoiseModel<T> {
        &self.noise
    }
    fn evaluate(&self, vars: &[Variable<T>]) -> Result<DVector<T>, FactorError> {
        let r = bbox_residual(vars[0].as_pose()?, vars[1].as_quadric()?, &self.measured, &self.intrinsics)?;
        Ok(DVector::from_column_slice(r.as_slice()))
    }
}

impl<T: Real> Factor<T> for OrientationFactor<T> {
    fn keys(&self) -> Vec<Key> {
        vec![Key::Landmark(self.landmark)]
    }
    fn noise(&self) -> &NoiseModel<T> {
        &self.noise
    }
    fn evaluate(&self, vars: &[Variable<T>]) -> Result<DVector<T>, FactorError> {
        let r = orientation_residual(vars[0].as_quadric()?, self.target)?;
        Ok(DVector::from_element(1, r))
    }
}

/// Semantic audit record for one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkInfo {
    pub id: u64,
    pub label: String,
    pub target: OrientationTarget,
    pub views: usize,
    /// Why the landmark was left out of the graph, if it was.
    pub dropped: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FactorGraph<T: Real> {
    pub intrinsics: CameraIntrinsics<T>,
    pub pose_count: usize,
    pub priors: Vec<PriorFactor<T>>,
    pub odometry: Vec<OdometryFactor<T>>,
    pub boxes: Vec<BoxFactor<T>>,
    pub orientations: Vec<OrientationFactor<T>>,
    pub landmarks: Vec<LandmarkInfo>,
}

impl<T: Real> FactorGraph<T> {
    /// All factors in a fixed order: prior, odometry, boxes, orientation.
    pub fn factors(&self) -> Vec<&dyn Factor<T>> {
        let mut out: Vec<&dyn Factor<T>> = Vec::with_capacity(self.len());
        out.extend(self.priors.iter().map(|f| f as &dyn Factor<T>));
        out.extend(self.odometry.iter().map(|f| f as &dyn Factor<T>));
        out.extend(self.boxes.iter().map(|f| f as &dyn Factor<T>));
        out.extend(self.orientations.iter().map(|f| f as &dyn Factor<T>));
        out
    }

    pub fn len(&self) -> usize {
        self.priors.len() + self.odometry.len() + self.boxes.len() + self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ids of landmarks that carry at least one factor.
    pub fn landmark_ids(&self) -> Vec<u64> {
        self.landmarks.iter().filter(|l| l.dropped.is_none()).map(|l| l.id).collect()
    }

    /// Detections of every kept landmark as `(pose index, box)` lists.
    pub fn observations(&self) -> BTreeMap<u64, Vec<(usize, BoundingBox2D<T>)>> {
        let mut obs: BTreeMap<u64, Vec<(usize, BoundingBox2D<T>)>> = BTreeMap::new();
        for f in &self.boxes {
            obs.entry(f.landmark).or_default().push((f.pose, f.measured));
        }
        obs
    }

    /// Removes every orientation factor.
    pub fn without_orientation_factors(&self) -> Self {
        Self { orientations: Vec::new(), ..self.clone() }
    }

    /// Replaces the standard deviation of every orientation factor.
    pub fn with_orientation_sigma(&self, sigma: T) -> Result<Self, GraphError> {
        let noise = NoiseModel::isotropic(1, sigma)?;
        let mut out = self.clone();
        for f in out.orientations.iter_mut() {
            f.noise = noise.clone();
        }
        Ok(out)
    }

    /// Checks that every factor references a declared variable and that no
    /// landmark has more than one orientation factor.
    pub fn validate(&self) -> Result<(), GraphError> {
        let kept: std::collections::BTreeSet<u64> = self.landmark_ids().into_iter().collect();
        let ok_key = |k: &Key| match k {
            Key::Pose(i) => *i < self.pose_count,
            Key::Landmark(j) => kept.contains(j),
        };
        for f in self.factors() {
            if let Some(bad) = f.keys().iter().find(|k| !ok_key(k)) {
                return Err(GraphError::InconsistentDataset(format!("factor references undeclared {bad:?}")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.orientations {
            if !seen.insert(o.landmark) {
                return Err(GraphError::InconsistentDataset(format!(
                    "landmark {} has several orientation factors",
                    o.landmark
                )));
            }
        }
        Ok(())
    }
}

/// Knobs controlling which factors are built and how they are weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub use_orientation_factors: bool,
    /// Standard deviation of the orientation residual.
    pub orientation_sigma: f64,
    /// Per-coordinate standard deviation of box measurements (pixels).
    pub box_sigma_px: f64,
    pub variance_threshold_px: f64,
    pub prior_sigma: f64,
    /// Odometry noise assumed when the dataset does not carry one.
    pub default_odometry_noise: NoiseConfig,
    /// Lower bound on odometry standard deviations (rad and m).
    pub min_odometry_sigma: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            use_orientation_factors: true,
            orientation_sigma: 0.1,
            box_sigma_px: 4.0,
            variance_threshold_px: crate::semantics::DEFAULT_VARIANCE_THRESHOLD_PX,
            prior_sigma: 1e-6,
            default_odometry_noise: NoiseConfig::default(),
            min_odometry_sigma: 1e-4,
        }
    }
}

/// Builds the factor graph for `dataset`.
///
/// Tracks whose box widths or heights vary too much are dropped entirely.
pub fn build_graph<T: Real>(
    dataset: &Dataset,
    table: &CategoryTable,
    config: &GraphConfig,
) -> Result<FactorGraph<T>, GraphError> {
    dataset.validate().map_err(|e| GraphError::InconsistentDataset(e.to_string()))?;
    if !(config.orientation_sigma > 0.0 && config.box_sigma_px > 0.0 && config.prior_sigma > 0.0) {
        return Err(GraphError::InvalidConfig("noise standard deviations must be positive".into()));
    }
    let n = dataset.pose_count();
    let intrinsics = dataset.intrinsics.cast::<T>();
    let odo_noise = dataset.noise.as_ref().unwrap_or(&config.default_odometry_noise);
    let floor = config.min_odometry_sigma;

    let priors = vec![PriorFactor {
        pose: 0,
        prior: dataset.anchor().cast(),
        noise: NoiseModel::isotropic(6, lit(config.prior_sigma))?,
    }];

    let mut odometry = Vec::with_capacity(n - 1);
    for (i, u) in dataset.odometry.iter().enumerate() {
        let (sr, st) = odo_noise.step_sigmas(u.rotation().angle(), u.translation().norm());
        let (sr, st) = (lit(sr.max(floor)), lit(st.max(floor)));
        odometry.push(OdometryFactor {
            from: i,
            to: i + 1,
            measurement: u.cast(),
            noise: NoiseModel::diagonal(&[sr, sr, sr, st, st, st])?,
        });
    }

    let box_noise = NoiseModel::isotropic(4, lit(config.box_sigma_px))?;
    let orient_noise = NoiseModel::isotropic(1, lit(config.orientation_sigma))?;
    let mut boxes = Vec::new();
    let mut orientations = Vec::new();
    let mut landmarks = Vec::new();
    for track in &dataset.tracks {
        let (label, _) = aggregate_label(track)?;
        let target = orientation_target(&label, table);
        let views: std::collections::BTreeSet<usize> = track.detections.iter().map(|d| d.pose_index).collect();
        let dropped = if reject_high_variance(track, config.variance_threshold_px)? {
            Some("box size standard deviation above threshold".to_string())
        } else {
            None
        };
        if dropped.is_none() {
            for d in &track.detections {
                boxes.push(BoxFactor {
                    pose: d.pose_index,
                    landmark: track.id,
                    measured: d.bbox.cast(),
                    intrinsics,
                    noise: box_noise.clone(),
                });
            }
            if config.use_orientation_factors && target.is_assigned() {
                orientations.push(OrientationFactor { landmark: track.id, target, noise: orient_noise.clone() });
            }
        }
        log::debug!("landmark {} labelled '{label}' -> {} ({dropped:?})", track.id, target.as_str());
        landmarks.push(LandmarkInfo { id: track.id, label, target, views: views.len(), dropped });
    }

    let graph = FactorGraph { intrinsics, pose_count: n, priors, odometry, boxes, orientations, landmarks };
    graph.validate()?;
    Ok(graph)
}

/// Gathers the variables a factor depends on.
pub(crate) fn gather<T: Real>(values: &Values<T>, keys: &[Key]) -> Result<Vec<Variable<T>>, GraphError> {
    keys.iter()
        .map(|k| values.get(*k).copied().ok_or(GraphError::MissingVariable(*k)))
        .collect()
}

/// Whitened squared residual of one factor, or `None` when its geometry is
/// degenerate at `values`.
pub fn factor_error<T: Real>(factor: &dyn Factor<T>, values: &Values<T>) -> Result<Option<T>, GraphError> {
    let vars = gather(values, &factor.keys())?;
    match factor.evaluate(&vars) {
        Ok(r) => Ok(Some(factor.noise().mahalanobis_sq(&r))),
        Err(FactorError::Geometry(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Sum of whitened squared residuals; degenerate factors contribute zero.
pub fn total_error<T: Real>(graph: &FactorGraph<T>, values: &Values<T>) -> Result<T, GraphError> {
    let mut sum = T::zero();
    for f in graph.factors() {
        if let Some(e) = factor_error(f, values)? {
            sum += e;
        }
    }
    Ok(sum)
}

/// Dead-reckoned poses plus initialized quadrics for every kept landmark.
/// Landmarks that cannot be initialized are reported and left out, together
/// with their factors.
pub fn initial_values<T: Real>(
    graph: &FactorGraph<T>,
    dataset: &Dataset,
) -> (FactorGraph<T>, Values<T>, BTreeMap<u64, InitError>) {
    let poses: Vec<Pose<T>> = dataset.dead_reckoning().iter().map(|p| p.cast()).collect();
    let mut values = Values::new();
    for (i, p) in poses.iter().enumerate() {
        values.insert_pose(i, *p);
    }
    let obs = graph.observations();
    let mut failed = BTreeMap::new();
    for (id, result) in initialize_quadrics(&poses, &obs, &graph.intrinsics) {
        match result {
            Ok((q, _)) => values.insert_quadric(id, q),
            Err(e) => {
                failed.insert(id, e);
            }
        }
    }
    let mut graph = graph.clone();
    if !failed.is_empty() {
        graph.boxes.retain(|f| !failed.contains_key(&f.landmark));
        graph.orientations.retain(|f| !failed.contains_key(&f.landmark));
        for l in graph.landmarks.iter_mut() {
            if let Some(e) = failed.get(&l.id) {
                l.dropped = Some(format!("initialization failed: {e}"));
            }
        }
    }
    (graph, values, failed)
}
