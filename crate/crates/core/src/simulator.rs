//! Synthetic desk scenes, camera trajectories, noisy odometry and noisy
//! bounding-box detections with ground truth.

use std::f64::consts::PI;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{config_digest, Dataset, LandmarkTruth};
use crate::factors::{predicted_box, OrientationTarget};
use crate::geometry::{BoundingBox2D, Box3D, CameraIntrinsics, ConstrainedDualQuadric, Pose};
use crate::semantics::{CategoryTable, Detection, DetectionTrack};

/// `E|N(0, σ²I₃)| = σ·sqrt(8/π)`; per-axis σ is scaled by the inverse so the
/// expected error norm equals the requested fraction.
const CHI3_MEAN_INV: f64 = 0.626_657_068_657_750_1; // sqrt(π/8)

/// Per-step rotation magnitude below which rotation noise is computed from
/// this floor instead.
pub const MIN_ROTATION_BASIS: f64 = PI / 180.0;

const MAX_PLACEMENT_ATTEMPTS: usize = 2000;
const PLACEMENT_MARGIN: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("could not place object {index} without overlap after {attempts} attempts")]
    PlacementFailure { index: usize, attempts: usize },
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Expected odometry translation error as a fraction of step length.
    pub translation_fraction: f64,
    /// Expected odometry rotation error as a fraction of step rotation angle.
    pub rotation_fraction: f64,
    /// Per-coordinate standard deviation of box noise (pixels).
    pub box_sigma_px: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { translation_fraction: 0.05, rotation_fraction: 0.15, box_sigma_px: 4.0, seed: 0 }
    }
}

impl NoiseConfig {
    pub fn noiseless(seed: u64) -> Self {
        Self { translation_fraction: 0.0, rotation_fraction: 0.0, box_sigma_px: 0.0, seed }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if ok(self.translation_fraction) && ok(self.rotation_fraction) && ok(self.box_sigma_px) {
            Ok(())
        } else {
            Err(SimError::InvalidConfig("noise parameters must be non-negative".into()))
        }
    }

    /// Per-axis standard deviations `(rotation rad, translation m)` used to
    /// corrupt a relative motion with the given step magnitudes.
    pub fn step_sigmas(&self, step_angle: f64, step_length: f64) -> (f64, f64) {
        let rot = self.rotation_fraction * step_angle.max(MIN_ROTATION_BASIS) * CHI3_MEAN_INV;
        let trans = self.translation_fraction * step_length * CHI3_MEAN_INV;
        (rot, trans)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub quadric: ConstrainedDualQuadric<f64>,
    pub envelope: Box3D<f64>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Orbit,
    Corridor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    pub n_objects: usize,
    pub n_poses: usize,
    /// Objects are placed with centroids in `[-w, w]²`.
    pub world_half_extent: f64,
    /// Probability that a detection puts its score mass on a wrong label.
    pub confusion_rate: f64,
    /// Emit detections whose exact box leaves the image, clipped to it.
    /// When false such detections are dropped.
    pub keep_truncated: bool,
    pub intrinsics: CameraIntrinsics<f64>,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            n_objects: 8,
            n_poses: 40,
            world_half_extent: 1.5,
            confusion_rate: 0.0,
            keep_truncated: true,
            intrinsics: CameraIntrinsics::default(),
        }
    }
}

/// Derives an independent RNG stream from a seed and a tag.
pub fn stream_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(tag)))
}

/// Deterministically derives a child seed, e.g. a per-trial noise seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix(splitmix(seed) ^ index)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_SCENE: u64 = 1;
const STREAM_TRAJECTORY: u64 = 2;
const STREAM_ODOMETRY: u64 = 3;
const STREAM_DETECTIONS: u64 = 4;

fn gaussian3(rng: &mut impl Rng, sigma: f64) -> Vector3<f64> {
    let mut n = || -> f64 { StandardNormal.sample(&mut *rng) };
    Vector3::new(n(), n(), n()) * sigma
}

/// Random desk scene. Vertical classes stand upright, horizontal classes lie
/// with their major axis in a random horizontal direction and unassigned
/// classes get a uniformly random orientation.
pub fn generate_scene(
    seed: u64,
    n_objects: usize,
    vocab: &[(String, OrientationTarget)],
    world_half_extent: f64,
) -> Result<Scene, SimError> {
    if n_objects == 0 {
        return Err(SimError::InvalidConfig("at least one object is required".into()));
    }
    if vocab.is_empty() {
        return Err(SimError::InvalidConfig("empty vocabulary".into()));
    }
    let mut rng = stream_rng(seed, STREAM_SCENE);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(n_objects);
    for index in 0..n_objects {
        let (label, target) = &vocab[rng.random_range(0..vocab.len())];
        let major = rng.random_range(0.12..0.30);
        let mid = major * rng.random_range(0.50..0.70);
        let minor = mid * rng.random_range(0.55..0.85);
        let yaw = rng.random_range(-PI..PI);
        let (rotation, radii) = match target {
            OrientationTarget::Vertical => {
                (UnitQuaternion::from_euler_angles(0.0, 0.0, yaw), Vector3::new(mid, minor, major))
            }
            OrientationTarget::Horizontal => {
                (UnitQuaternion::from_euler_angles(0.0, 0.0, yaw), Vector3::new(major, mid, minor))
            }
            OrientationTarget::Unassigned => {
                let q = nalgebra::Quaternion::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                (UnitQuaternion::new_normalize(q), Vector3::new(major, mid, minor))
            }
        };
        let shape = ConstrainedDualQuadric::new(rotation, Vector3::zeros(), radii)
            .expect("radii are positive by construction");
        let half = shape.aabb().half_extents;
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let elevation = rng.random_range(0.0..0.6);
            let center = Vector3::new(
                rng.random_range(-world_half_extent..world_half_extent),
                rng.random_range(-world_half_extent..world_half_extent),
                half.z + elevation,
            );
            let inflated = Box3D::new(center, half.add_scalar(PLACEMENT_MARGIN));
            if objects.iter().all(|o| o.envelope.intersection_volume(&inflated) == 0.0) {
                placed = Some(center);
                break;
            }
        }
        let center = placed.ok_or(SimError::PlacementFailure { index, attempts: MAX_PLACEMENT_ATTEMPTS })?;
        let quadric = shape.with_centroid(center);
        objects.push(SceneObject { quadric, envelope: quadric.aabb(), label: label.clone() });
    }
    Ok(Scene { objects })
}

/// Camera-to-world pose at `eye` looking at `target` with world z up; the
/// camera frame has x right, y down and z forward.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Pose<f64> {
    let forward = (target - eye).normalize();
    let mut right = forward.cross(&Vector3::z());
    if right.norm() < 1e-9 {
        right = Vector3::x();
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let r = Matrix3::from_columns(&[right, down, forward]);
    Pose::from_rotation_matrix(&r, *eye)
}

pub fn generate_trajectory(
    seed: u64,
    kind: TrajectoryKind,
    n_poses: usize,
    world_half_extent: f64,
) -> Vec<Pose<f64>> {
    let mut rng = stream_rng(seed, STREAM_TRAJECTORY);
    let centre = Vector3::new(0.0, 0.0, 0.3);
    let n = n_poses.max(2);
    let mut jitter = |s: f64| rng.random_range(-s..s);
    match kind {
        TrajectoryKind::Orbit => {
            let radius = world_half_extent * std::f64::consts::SQRT_2 + 0.8 + jitter(0.3).abs();
            let height = 1.25 + jitter(0.3);
            let start = jitter(PI);
            let sweep = (200.0 + jitter(50.0) + 50.0).to_radians() * if jitter(1.0) < 0.0 { -1.0 } else { 1.0 };
            (0..n)
                .map(|i| {
                    let a = start + sweep * i as f64 / (n - 1) as f64;
                    let r = radius + jitter(0.1);
                    let eye = Vector3::new(r * a.cos(), r * a.sin(), height + jitter(0.08));
                    let target = centre + Vector3::new(jitter(0.2), jitter(0.2), jitter(0.1));
                    look_at(&eye, &target)
                })
                .collect()
        }
        TrajectoryKind::Corridor => {
            let heading = jitter(PI);
            let (c, s) = (heading.cos(), heading.sin());
            let along = Vector3::new(c, s, 0.0);
            let across = Vector3::new(-s, c, 0.0);
            let offset = world_half_extent + 2.0 + jitter(0.3).abs();
            let half_len = world_half_extent + 1.0;
            let height = 1.2 + jitter(0.25);
            (0..n)
                .map(|i| {
                    let u = -half_len + 2.0 * half_len * i as f64 / (n - 1) as f64;
                    let eye = along * u - across * offset + Vector3::new(0.0, 0.0, height + jitter(0.08));
                    let target = centre + along * (0.4 * u) + Vector3::new(jitter(0.2), jitter(0.2), jitter(0.1));
                    look_at(&eye, &target)
                })
                .collect()
        }
    }
}

/// Relative motions `gt[i]⁻¹ · gt[i+1]` perturbed by zero-mean Gaussian noise
/// on the right.
pub fn corrupt_odometry(gt_poses: &[Pose<f64>], noise: &NoiseConfig) -> Vec<Pose<f64>> {
    let mut rng = stream_rng(noise.seed, STREAM_ODOMETRY);
    gt_poses
        .windows(2)
        .map(|w| {
            let exact = w[0].between(&w[1]);
            let (sig_r, sig_t) = noise.step_sigmas(exact.rotation().angle(), exact.translation().norm());
            let dw = gaussian3(&mut rng, sig_r);
            let dt = gaussian3(&mut rng, sig_t);
            exact.compose(&Pose::new(UnitQuaternion::from_scaled_axis(dw), dt))
        })
        .collect()
}

/// Noisy per-object detection tracks. Track ids equal object indices.
pub fn render_detections(
    scene: &Scene,
    gt_poses: &[Pose<f64>],
    config: &SimulatorConfig,
    noise: &NoiseConfig,
    vocabulary: &[String],
) -> Vec<DetectionTrack> {
    let mut rng = stream_rng(noise.seed, STREAM_DETECTIONS);
    let k = &config.intrinsics;
    let mut tracks = Vec::new();
    for (id, obj) in scene.objects.iter().enumerate() {
        let true_idx = vocabulary.iter().position(|l| *l == obj.label);
        let mut detections = Vec::new();
        for (pose_index, pose) in gt_poses.iter().enumerate() {
            let Ok(exact) = predicted_box(pose, &obj.quadric, k) else {
                continue;
            };
            if !exact.intersects_image(k.width, k.height) {
                continue;
            }
            if !config.keep_truncated && !exact.inside_image(k.width, k.height) {
                continue;
            }
            let clipped = exact.clip(k.width, k.height);
            let mut c = clipped.to_array();
            for v in c.iter_mut() {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v += n * noise.box_sigma_px;
            }
            let bbox = BoundingBox2D::new(c[0].min(c[2]), c[1].min(c[3]), c[0].max(c[2]), c[1].max(c[3]));
            let mut scores = vec![0.0; vocabulary.len()];
            let confused = config.confusion_rate > 0.0 && rng.random::<f64>() < config.confusion_rate;
            let idx = match (true_idx, confused) {
                (Some(t), true) if vocabulary.len() > 1 => {
                    let other = rng.random_range(0..vocabulary.len() - 1);
                    if other >= t { other + 1 } else { other }
                }
                (Some(t), _) => t,
                (None, _) => rng.random_range(0..vocabulary.len().max(1)),
            };
            if let Some(s) = scores.get_mut(idx) {
                *s = 1.0;
            }
            detections.push(Detection { pose_index, bbox, scores });
        }
        if !detections.is_empty() {
            tracks.push(DetectionTrack { id: id as u64, vocabulary: vocabulary.to_vec(), detections });
        }
    }
    tracks
}

/// Generates a complete trial: scene and trajectory from `scene_seed`,
/// measurement noise from `noise.seed`.
pub fn simulate(
    config: &SimulatorConfig,
    table: &CategoryTable,
    scene_seed: u64,
    kind: TrajectoryKind,
    noise: &NoiseConfig,
) -> Result<Dataset, SimError> {
    noise.validate()?;
    if config.n_poses < 2 {
        return Err(SimError::InvalidConfig("at least two poses are required".into()));
    }
    if !(0.0..=1.0).contains(&config.confusion_rate) {
        return Err(SimError::InvalidConfig("confusion rate must lie in [0, 1]".into()));
    }
    let vocab: Vec<(String, OrientationTarget)> = table.labels().map(|(l, t)| (l.to_string(), t)).collect();
    let vocabulary: Vec<String> = vocab.iter().map(|(l, _)| l.clone()).collect();
    let scene = generate_scene(scene_seed, config.n_objects, &vocab, config.world_half_extent)?;
    let poses_gt = generate_trajectory(scene_seed, kind, config.n_poses, config.world_half_extent);
    let odometry = corrupt_odometry(&poses_gt, noise);
    let tracks = render_detections(&scene, &poses_gt, config, noise, &vocabulary);
    let landmarks_gt = scene
        .objects
        .iter()
        .enumerate()
        .map(|(id, o)| LandmarkTruth {
            id: id as u64,
            center: o.envelope.center.into(),
            half_extents: o.envelope.half_extents.into(),
            label: o.label.clone(),
            quadric: o.quadric.to_vector9(),
        })
        .collect();
    Ok(Dataset {
        intrinsics: config.intrinsics,
        poses_gt,
        odometry,
        tracks,
        landmarks_gt,
        noise: Some(noise.clone()),
        config_hash: Some(config_digest(&(config, &vocabulary, scene_seed, kind, noise))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vec<(String, OrientationTarget)> {
        CategoryTable::default_table().labels().map(|(l, t)| (l.to_string(), t)).collect()
    }

    #[test]
    fn scene_is_deterministic() {
        let a = generate_scene(11, 6, &vocab(), 1.5).unwrap();
        let b = generate_scene(11, 6, &vocab(), 1.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_scene(12, 6, &vocab(), 1.5).unwrap());
    }

    #[test]
    fn bottle_stands_upright() {
        let v = vec![("bottle".to_string(), OrientationTarget::Vertical)];
        let s = generate_scene(3, 1, &v, 1.5).unwrap();
        let m = s.objects[0].quadric.major_axis().unwrap();
        assert!((m - Vector3::z()).norm() < 1e-12);
        assert_eq!(s.objects[0].quadric.cosine_similarity_z().unwrap(), 1.0);
    }

    #[test]
    fn book_lies_flat() {
        let v = vec![("book".to_string(), OrientationTarget::Horizontal)];
        for seed in 0..20 {
            let s = generate_scene(seed, 1, &v, 1.5).unwrap();
            assert!(s.objects[0].quadric.cosine_similarity_z().unwrap() < 1e-12);
        }
    }

    // Brute-force pairwise intersection of the object envelopes.
    #[test]
    fn objects_do_not_overlap() {
        for seed in 0..10 {
            let s = generate_scene(seed, 10, &vocab(), 1.5).unwrap();
            for i in 0..s.objects.len() {
                for j in (i + 1)..s.objects.len() {
                    let (a, b) = (&s.objects[i].envelope, &s.objects[j].envelope);
                    let overlap = (0..3).all(|k| (a.center[k] - b.center[k]).abs() < a.half_extents[k] + b.half_extents[k]);
                    assert!(!overlap, "seed {seed}: {i} and {j} overlap");
                }
            }
        }
    }

    #[test]
    fn crowded_scene_fails_placement() {
        let r = generate_scene(0, 200, &vocab(), 0.3);
        assert!(matches!(r, Err(SimError::PlacementFailure { .. })));
        assert!(generate_scene(0, 0, &vocab(), 1.0).is_err());
    }

    #[test]
    fn noiseless_odometry_is_exact() {
        let gt = generate_trajectory(5, TrajectoryKind::Orbit, 20, 1.5);
        let odo = corrupt_odometry(&gt, &NoiseConfig::noiseless(9));
        for (w, u) in gt.windows(2).zip(&odo) {
            assert!(w[0].between(&w[1]).local(u).norm() < 1e-12);
        }
    }

    #[test]
    fn odometry_is_seeded() {
        let gt = generate_trajectory(5, TrajectoryKind::Corridor, 20, 1.5);
        let n = NoiseConfig { seed: 77, ..NoiseConfig::default() };
        assert_eq!(corrupt_odometry(&gt, &n), corrupt_odometry(&gt, &n));
    }

    // Monte Carlo over 10⁴ steps of fixed length.
    #[test]
    fn translation_noise_matches_fraction() {
        let step = 0.3;
        let gt: Vec<Pose<f64>> =
            (0..=10_000).map(|i| Pose::from_translation(Vector3::new(step * i as f64, 0.0, 0.0))).collect();
        let odo = corrupt_odometry(&gt, &NoiseConfig { seed: 4, ..NoiseConfig::default() });
        let mean: f64 = gt
            .windows(2)
            .zip(&odo)
            .map(|(w, u)| (u.translation() - w[0].between(&w[1]).translation()).norm() / step)
            .sum::<f64>()
            / odo.len() as f64;
        assert!((0.045..=0.055).contains(&mean), "mean relative error {mean}");
    }

    #[test]
    fn trajectories_look_at_scene() {
        for kind in [TrajectoryKind::Orbit, TrajectoryKind::Corridor] {
            for p in generate_trajectory(2, kind, 30, 1.5) {
                let c = p.inverse().transform_point(&Vector3::new(0.0, 0.0, 0.3));
                assert!(c.z > 1.0, "{kind:?}: scene centre at depth {}", c.z);
                let r = p.rotation_matrix();
                assert!((r.determinant() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn detections_respect_visibility() {
        let table = CategoryTable::default_table();
        let cfg = SimulatorConfig { keep_truncated: true, ..SimulatorConfig::default() };
        let ds = simulate(&cfg, &table, 3, TrajectoryKind::Orbit, &NoiseConfig::noiseless(1)).unwrap();
        let k = ds.intrinsics;
        let objects: Vec<_> = ds.landmarks_gt.iter().map(|l| l.quadric().unwrap()).collect();
        for t in &ds.tracks {
            for d in &t.detections {
                let exact = predicted_box(&ds.poses_gt[d.pose_index], &objects[t.id as usize], &k).unwrap();
                assert!(exact.intersects_image(k.width, k.height));
                assert_eq!(d.bbox, exact.clip(k.width, k.height));
            }
        }
    }

    #[test]
    fn object_behind_camera_is_not_detected() {
        let v = vec![("bottle".to_string(), OrientationTarget::Vertical)];
        let scene = generate_scene(1, 1, &v, 1.0).unwrap();
        let c = scene.objects[0].quadric.centroid();
        // Camera 3 m away looking directly away from the object.
        let eye = c + Vector3::new(3.0, 0.0, 0.0);
        let pose = look_at(&eye, &(eye + Vector3::new(1.0, 0.0, 0.0)));
        let tracks = render_detections(
            &scene,
            &[pose],
            &SimulatorConfig::default(),
            &NoiseConfig::noiseless(0),
            &["bottle".to_string()],
        );
        assert!(tracks.is_empty());
    }

    #[test]
    fn confusion_free_labels_are_recovered() {
        let table = CategoryTable::default_table();
        let ds = simulate(&SimulatorConfig::default(), &table, 8, TrajectoryKind::Orbit, &NoiseConfig::default()).unwrap();
        for t in &ds.tracks {
            let (label, _) = crate::semantics::aggregate_label(t).unwrap();
            assert_eq!(label, ds.landmarks_gt[t.id as usize].label);
        }
    }
}
