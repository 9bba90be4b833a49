//! Versioned JSON dataset consumed by the solver and emitted by the simulator.

use std::path::Path;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::factors::OrientationTarget;
use crate::geometry::{Box3D, CameraIntrinsics, ConstrainedDualQuadric, Pose};
use crate::graph::SolveStats;
use crate::semantics::DetectionTrack;
use crate::simulator::NoiseConfig;

pub const FORMAT_VERSION: u32 = 1;

/// Short hex digest of the JSON form of `value`, recorded in output files.
pub fn config_digest<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unsupported dataset format {0} (expected {FORMAT_VERSION})")]
    UnsupportedFormat(u32),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("dataset JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Ground truth for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkTruth {
    pub id: u64,
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    pub label: String,
    /// `(θ, t, s)` parameters of the true ellipsoid.
    pub quadric: [f64; 9],
}

impl LandmarkTruth {
    pub fn box3d(&self) -> Box3D<f64> {
        Box3D::new(self.center.into(), self.half_extents.into())
    }

    pub fn quadric(&self) -> Option<ConstrainedDualQuadric<f64>> {
        ConstrainedDualQuadric::from_vector9(&self.quadric).ok()
    }
}

/// Trajectory, odometry, detection tracks and (optional) ground truth for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub intrinsics: CameraIntrinsics<f64>,
    /// Ground-truth camera-to-world poses; empty when unknown.
    pub poses_gt: Vec<Pose<f64>>,
    /// Relative motions `x_i⁻¹ · x_{i+1}` as measured.
    pub odometry: Vec<Pose<f64>>,
    pub tracks: Vec<DetectionTrack>,
    pub landmarks_gt: Vec<LandmarkTruth>,
    /// Noise the measurements were generated with, when known.
    pub noise: Option<NoiseConfig>,
    /// Digest of the generating configuration, when known.
    pub config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    intrinsics: CameraIntrinsics<f64>,
    poses_gt: Vec<[f64; 7]>,
    odometry: Vec<[f64; 7]>,
    tracks: Vec<DetectionTrack>,
    landmarks_gt: Vec<LandmarkTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<NoiseConfig>,
}

fn pose_from_record(r: &[f64; 7], what: &str, i: usize) -> Result<Pose<f64>, DatasetError> {
    Pose::from_record(r).ok_or_else(|| DatasetError::Inconsistent(format!("{what}[{i}] has a zero quaternion")))
}

impl Dataset {
    pub fn pose_count(&self) -> usize {
        self.odometry.len() + 1
    }

    /// Starting pose used to anchor the trajectory.
    pub fn anchor(&self) -> Pose<f64> {
        self.poses_gt.first().copied().unwrap_or_default()
    }

    /// Chains the odometry from the anchor pose.
    pub fn dead_reckoning(&self) -> Vec<Pose<f64>> {
        let mut poses = Vec::with_capacity(self.pose_count());
        let mut x = self.anchor();
        poses.push(x);
        for u in &self.odometry {
            x = crate::geometry::apply_motion(&x, u);
            poses.push(x);
        }
        poses
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        self.intrinsics
            .validate()
            .map_err(|e| DatasetError::Inconsistent(e.to_string()))?;
        if self.odometry.is_empty() {
            return Err(DatasetError::Inconsistent("at least two poses are required".into()));
        }
        if !self.poses_gt.is_empty() && self.poses_gt.len() != self.pose_count() {
            return Err(DatasetError::Inconsistent(format!(
                "{} ground-truth poses for {} odometry steps",
                self.poses_gt.len(),
                self.odometry.len()
            )));
        }
        for (what, poses) in [("poses_gt", &self.poses_gt), ("odometry", &self.odometry)] {
            if let Some(i) = poses.iter().position(|p| !p.to_record().iter().all(|v| v.is_finite())) {
                return Err(DatasetError::Inconsistent(format!("{what}[{i}] is not finite")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tracks {
            if !seen.insert(t.id) {
                return Err(DatasetError::Inconsistent(format!("duplicate track id {}", t.id)));
            }
            for d in &t.detections {
                if d.pose_index >= self.pose_count() {
                    return Err(DatasetError::Inconsistent(format!(
                        "track {} references pose {} of {}",
                        t.id,
                        d.pose_index,
                        self.pose_count()
                    )));
                }
                if d.scores.len() != t.vocabulary.len() {
                    return Err(DatasetError::Inconsistent(format!(
                        "track {} has a score vector of the wrong length",
                        t.id
                    )));
                }
                if !d.bbox.is_valid() {
                    return Err(DatasetError::Inconsistent(format!("track {} has an inverted or non-finite box", t.id)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, DatasetError> {
        let file = DatasetFile {
            format: FORMAT_VERSION,
            config_hash: self.config_hash.clone(),
            intrinsics: self.intrinsics,
            poses_gt: self.poses_gt.iter().map(Pose::to_record).collect(),
            odometry: self.odometry.iter().map(Pose::to_record).collect(),
            tracks: self.tracks.clone(),
            landmarks_gt: self.landmarks_gt.clone(),
            noise: self.noise.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let file: DatasetFile = serde_json::from_str(text)?;
        if file.format != FORMAT_VERSION {
            return Err(DatasetError::UnsupportedFormat(file.format));
        }
        let poses_gt = file
            .poses_gt
            .iter()
            .enumerate()
            .map(|(i, r)| pose_from_record(r, "poses_gt", i))
            .collect::<Result<_, _>>()?;
        let odometry = file
            .odometry
            .iter()
            .enumerate()
            .map(|(i, r)| pose_from_record(r, "odometry", i))
            .collect::<Result<_, _>>()?;
        let ds = Self {
            intrinsics: file.intrinsics,
            poses_gt,
            odometry,
            tracks: file.tracks,
            landmarks_gt: file.landmarks_gt,
            noise: file.noise,
            config_hash: file.config_hash,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Estimated landmark as written by the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedLandmark {
    pub id: u64,
    pub label: String,
    pub target: OrientationTarget,
    /// `(θ, t, s)` parameters.
    pub quadric: [f64; 9],
}

/// Solver output: optimized poses and landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub config_hash: String,
    pub poses: Vec<Pose<f64>>,
    pub landmarks: Vec<EstimatedLandmark>,
    pub stats: Option<SolveStats>,
}

#[derive(Serialize, Deserialize)]
struct EstimateFile {
    format: u32,
    config_hash: String,
    poses: Vec<[f64; 7]>,
    landmarks: Vec<EstimatedLandmark>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stats: Option<SolveStats>,
}

impl Estimate {
    pub fn quadrics(&self) -> Result<BTreeMap<u64, ConstrainedDualQuadric<f64>>, DatasetError> {
        self.landmarks
            .iter()
            .map(|l| {
                ConstrainedDualQuadric::from_vector9(&l.quadric)
                    .map(|q| (l.id, q))
                    .map_err(|e| DatasetError::Inconsistent(format!("landmark {}: {e}", l.id)))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, DatasetError> {
        let file = EstimateFile {
            format: FORMAT_VERSION,
            config_hash: self.config_hash.clone(),
            poses: self.poses.iter().map(Pose::to_record).collect(),
            landmarks: self.landmarks.clone(),
            stats: self.stats.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let file: EstimateFile = serde_json::from_str(text)?;
        if file.format != FORMAT_VERSION {
            return Err(DatasetError::UnsupportedFormat(file.format));
        }
        let poses = file
            .poses
            .iter()
            .enumerate()
            .map(|(i, r)| pose_from_record(r, "poses", i))
            .collect::<Result<_, _>>()?;
        let est = Self { config_hash: file.config_hash, poses, landmarks: file.landmarks, stats: file.stats };
        est.quadrics()?;
        Ok(est)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
