use nalgebra::{DVector, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadric_orient::dataset::Dataset;
use quadric_orient::evaluation::ate;
use quadric_orient::factors::{OrientationTarget, Variable};
use quadric_orient::geometry::{BoundingBox2D, CameraIntrinsics, ConstrainedDualQuadric, Pose};
use quadric_orient::graph::*;
use quadric_orient::semantics::{CategoryTable, Detection, DetectionTrack};
use quadric_orient::simulator::{look_at, simulate, NoiseConfig, SimulatorConfig, TrajectoryKind};

fn three_pose_dataset(label: &str, widths: &[f64]) -> Dataset {
    let poses: Vec<Pose<f64>> = (0..3)
        .map(|i| look_at(&Vector3::new(3.0, 0.5 * i as f64 - 0.5, 1.0), &Vector3::zeros()))
        .collect();
    let detections = widths
        .iter()
        .enumerate()
        .map(|(i, w)| Detection {
            pose_index: i,
            bbox: BoundingBox2D::new(280.0, 200.0, 280.0 + w, 300.0),
            scores: vec![1.0],
        })
        .collect();
    Dataset {
        intrinsics: CameraIntrinsics::default(),
        odometry: poses.windows(2).map(|w| w[0].between(&w[1])).collect(),
        poses_gt: poses,
        tracks: vec![DetectionTrack { id: 0, vocabulary: vec![label.into()], detections }],
        landmarks_gt: Vec::new(),
        noise: None,
        config_hash: None,
    }
}

fn noisy(seed: u64, kind: TrajectoryKind) -> Dataset {
    let sim = SimulatorConfig { n_objects: 4, n_poses: 20, ..SimulatorConfig::default() };
    let noise = NoiseConfig { seed, ..NoiseConfig::default() };
    simulate(&sim, &CategoryTable::default_table(), seed, kind, &noise).unwrap()
}

fn ground_truth_values(ds: &Dataset) -> Values<f64> {
    let mut v = Values::new();
    for (i, p) in ds.poses_gt.iter().enumerate() {
        v.insert_pose(i, *p);
    }
    for l in &ds.landmarks_gt {
        v.insert_quadric(l.id, l.quadric().unwrap());
    }
    v
}

#[test]
fn factor_counts_follow_topology() {
    let table = CategoryTable::default_table();
    let g = build_graph::<f64>(&three_pose_dataset("bottle", &[40.0, 42.0]), &table, &GraphConfig::default()).unwrap();
    assert_eq!((g.priors.len(), g.odometry.len(), g.boxes.len(), g.orientations.len()), (1, 2, 2, 1));
    assert_eq!(g.len(), 6);
    assert_eq!(g.orientations[0].target, OrientationTarget::Vertical);
}

#[test]
fn unassigned_label_has_no_orientation_factor() {
    let table = CategoryTable::default_table();
    let g =
        build_graph::<f64>(&three_pose_dataset("sports ball", &[40.0, 42.0]), &table, &GraphConfig::default()).unwrap();
    assert_eq!(g.boxes.len(), 2);
    assert!(g.orientations.is_empty());
}

#[test]
fn orientation_toggle_removes_factors() {
    let table = CategoryTable::default_table();
    let cfg = GraphConfig { use_orientation_factors: false, ..GraphConfig::default() };
    let g = build_graph::<f64>(&three_pose_dataset("bottle", &[40.0, 42.0]), &table, &cfg).unwrap();
    assert!(g.orientations.is_empty());
    assert_eq!(g.boxes.len(), 2);
}

#[test]
fn high_variance_track_is_dropped() {
    let table = CategoryTable::default_table();
    let g = build_graph::<f64>(&three_pose_dataset("bottle", &[10.0, 130.0]), &table, &GraphConfig::default()).unwrap();
    assert!(g.boxes.is_empty());
    assert!(g.orientations.is_empty());
    assert!(g.landmark_ids().is_empty());
    assert!(g.landmarks[0].dropped.is_some());
}

#[test]
fn dangling_detection_is_rejected() {
    let mut ds = three_pose_dataset("bottle", &[40.0, 42.0]);
    ds.tracks[0].detections[1].pose_index = 7;
    let err = build_graph::<f64>(&ds, &CategoryTable::default_table(), &GraphConfig::default()).unwrap_err();
    assert!(matches!(err, GraphError::InconsistentDataset(_)));
}

#[test]
fn noiseless_ground_truth_has_negligible_error() {
    let table = CategoryTable::default_table();
    let sim = SimulatorConfig { keep_truncated: false, ..SimulatorConfig::default() };
    let ds = simulate(&sim, &table, 4, TrajectoryKind::Corridor, &NoiseConfig::noiseless(4)).unwrap();
    let g = build_graph::<f64>(&ds, &table, &GraphConfig::default()).unwrap();
    let v = ground_truth_values(&ds);
    assert!(total_error(&g.without_orientation_factors(), &v).unwrap() < 1e-6);
    assert!(total_error(&g, &v).unwrap() < 1e-6);
}

#[test]
fn satisfied_orientation_factor_adds_nothing() {
    let table = CategoryTable::default_table();
    let ds = three_pose_dataset("bottle", &[40.0, 42.0]);
    let g = build_graph::<f64>(&ds, &table, &GraphConfig::default()).unwrap();
    let mut v = Values::new();
    for (i, p) in ds.poses_gt.iter().enumerate() {
        v.insert_pose(i, *p);
    }
    let upright = ConstrainedDualQuadric::new(UnitQuaternion::identity(), Vector3::zeros(), Vector3::new(0.1, 0.1, 0.3)).unwrap();
    v.insert_quadric(0, upright);
    let with = total_error(&g, &v).unwrap();
    let without = total_error(&g.without_orientation_factors(), &v).unwrap();
    assert_eq!(with, without);
}

#[test]
fn total_error_equals_per_factor_sum() {
    let ds = noisy(3, TrajectoryKind::Orbit);
    let table = CategoryTable::default_table();
    let g = build_graph::<f64>(&ds, &table, &GraphConfig::default()).unwrap();
    let (g, v, _) = initial_values(&g, &ds);
    let mut sum = 0.0;
    for f in &g.priors {
        let r = f.evaluate(&[*v.get(Key::Pose(f.pose)).unwrap()]).unwrap();
        sum += r.component_div(f.noise.sigmas()).norm_squared();
    }
    for f in &g.odometry {
        let vars = [*v.get(Key::Pose(f.from)).unwrap(), *v.get(Key::Pose(f.to)).unwrap()];
        sum += f.evaluate(&vars).unwrap().component_div(f.noise.sigmas()).norm_squared();
    }
    for f in &g.boxes {
        let vars = [*v.get(Key::Pose(f.pose)).unwrap(), *v.get(Key::Landmark(f.landmark)).unwrap()];
        if let Ok(r) = f.evaluate(&vars) {
            sum += r.component_div(f.noise.sigmas()).norm_squared();
        }
    }
    for f in &g.orientations {
        if let Ok(r) = f.evaluate(&[*v.get(Key::Landmark(f.landmark)).unwrap()]) {
            sum += r.component_div(f.noise.sigmas()).norm_squared();
        }
    }
    let total = total_error(&g, &v).unwrap();
    assert!((total - sum).abs() <= 1e-9 * sum.max(1.0));
}

#[test]
fn ground_truth_is_a_fixed_point() {
    let table = CategoryTable::default_table();
    let sim = SimulatorConfig { keep_truncated: false, ..SimulatorConfig::default() };
    let ds = simulate(&sim, &table, 8, TrajectoryKind::Orbit, &NoiseConfig::noiseless(8)).unwrap();
    let g = build_graph::<f64>(&ds, &table, &GraphConfig::default()).unwrap();
    let v = ground_truth_values(&ds);
    let (out, stats) = optimize(&g, &v, &SolverConfig::default()).unwrap();
    assert!(stats.iterations <= 2);
    assert!((stats.final_error - stats.initial_error).abs() < 1e-9);
    assert!(ate(&out.poses(), &ds.poses_gt, false).unwrap() < 1e-6);
}

#[test]
fn vertical_factor_uprights_tilted_landmark() {
    // Oracle: sweep the tilt angle; the orientation cost is minimal at zero tilt.
    let cost = |tilt: f64| (1.0 - tilt.cos()).powi(2);
    let best = (0..=900).map(|i| (i as f64 / 10.0).to_radians()).fold((f64::MAX, 0.0), |acc, t| {
        if cost(t) < acc.0 {
            (cost(t), t)
        } else {
            acc
        }
    });
    assert_eq!(best.1, 0.0);

    let tilted = ConstrainedDualQuadric::new(
        UnitQuaternion::from_euler_angles(std::f64::consts::FRAC_PI_4, 0.0, 0.0),
        Vector3::new(1.0, 2.0, 0.5),
        Vector3::new(0.1, 0.15, 0.3),
    )
    .unwrap();
    let graph = FactorGraph {
        intrinsics: CameraIntrinsics::default(),
        pose_count: 0,
        priors: vec![],
        odometry: vec![],
        boxes: vec![],
        orientations: vec![OrientationFactor {
            landmark: 5,
            target: OrientationTarget::Vertical,
            noise: quadric_orient::factors::NoiseModel::isotropic(1, 0.1).unwrap(),
        }],
        landmarks: vec![LandmarkInfo {
            id: 5,
            label: "bottle".into(),
            target: OrientationTarget::Vertical,
            views: 0,
            dropped: None,
        }],
    };
    let mut v = Values::new();
    v.insert_quadric(5, tilted);
    let (out, stats) = optimize(&graph, &v, &SolverConfig::default()).unwrap();
    let c = out.quadric(5).unwrap().cosine_similarity_z().unwrap();
    assert!(c >= 0.999, "c = {c}, {stats:?}");
    assert!((best.1.cos() - 1.0).abs() < 1e-12);
}

#[test]
fn lm_is_monotone_and_reproducible() {
    let ds = noisy(5, TrajectoryKind::Corridor);
    let table = CategoryTable::default_table();
    let g = build_graph::<f64>(&ds, &table, &GraphConfig::default()).unwrap();
    let (g, v, _) = initial_values(&g, &ds);
    let (a, sa) = optimize(&g, &v, &SolverConfig::default()).unwrap();
    let (b, sb) = optimize(&g, &v, &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert!(sa.error_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(sa.final_error <= sa.initial_error);
}

#[test]
fn optimized_trajectory_beats_dead_reckoning() {
    for (seed, kind) in [(1, TrajectoryKind::Orbit), (2, TrajectoryKind::Corridor)] {
        let ds = noisy(seed, kind);
        let sol = solve_dataset::<f64>(&ds, &CategoryTable::default_table(), &SolveOptions::default()).unwrap();
        let odo = ate(&ds.dead_reckoning(), &ds.poses_gt, true).unwrap();
        let est = ate(&sol.values.poses(), &ds.poses_gt, true).unwrap();
        assert!(est < odo, "seed {seed}: {est} vs odometry-only {odo}");
    }
}

#[test]
fn schur_matches_dense_solve() {
    let ds = noisy(6, TrajectoryKind::Orbit);
    let g = build_graph::<f64>(&ds, &CategoryTable::default_table(), &GraphConfig::default()).unwrap();
    let (g, v, _) = initial_values(&g, &ds);
    let sys = linearize(&g, &v, &SolverConfig::default()).unwrap();
    assert!(sys.landmark_count > 0);
    for lambda in [1e-3, 1.0] {
        let a = solve_damped(&sys, lambda, true).unwrap();
        let b = solve_damped(&sys, lambda, false).unwrap();
        assert!((&a - &b).norm() <= 1e-6 * b.norm().max(1.0), "λ={lambda}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let ds = noisy(7, TrajectoryKind::Orbit);
    let g = build_graph::<f64>(&ds, &CategoryTable::default_table(), &GraphConfig::default()).unwrap();
    let (g, v0, _) = initial_values(&g, &ds);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = SolverConfig::default();
    for _ in 0..3 {
        // Random state near the initialization, leaving the anchored pose
        // on its prior so the total error stays well scaled.
        let mut v = Values::new();
        for (k, var) in v0.iter() {
            let scale = if *k == Key::Pose(0) { 0.0 } else { 0.01 };
            let d: Vec<f64> = (0..var.dim()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            v.insert(*k, var.retract(&d));
        }
        let sys = linearize(&g, &v, &cfg).unwrap();
        let active = |vals: &Values<f64>| -> Vec<bool> {
            g.factors().into_iter().map(|f| factor_error(f, vals).unwrap().is_some()).collect()
        };
        let base = active(&v);
        let mut fd = DVector::zeros(sys.gradient.len());
        let mut stable = vec![true; sys.gradient.len()];
        let mut off = 0;
        let h = 1e-6;
        for k in &sys.ordering {
            let var: Variable<f64> = *v.get(*k).unwrap();
            for i in 0..var.dim() {
                let mut d = vec![0.0; var.dim()];
                d[i] = h;
                let mut vp = v.clone();
                vp.insert(*k, var.retract(&d));
                d[i] = -h;
                let mut vm = v.clone();
                vm.insert(*k, var.retract(&d));
                fd[off + i] = (total_error(&g, &vp).unwrap() - total_error(&g, &vm).unwrap()) / (2.0 * h);
                // Coordinates whose step toggles a degenerate factor see a jump, not a slope.
                stable[off + i] = active(&vp) == base && active(&vm) == base;
            }
            off += var.dim();
        }
        // The anchored pose is skipped: its 1e-6 prior makes differences of
        // the total error meaningless at this step size.
        let grad = DVector::from_iterator(
            stable.len(),
            sys.gradient.iter().zip(&stable).map(|(x, &ok)| if ok { 2.0 * x } else { 0.0 }),
        );
        fd.iter_mut().zip(&stable).for_each(|(x, &ok)| *x = if ok { *x } else { 0.0 });
        assert!(stable.iter().filter(|&&ok| ok).count() * 10 > 9 * stable.len());
        let nl = 9 * sys.landmark_count;
        let np = 6 * ds.pose_count();
        for (name, start, len) in [("landmark", 0, nl), ("pose", nl + 6, np - 6)] {
            let a = grad.rows(start, len).into_owned();
            let b = fd.rows(start, len).into_owned();
            let rel = (&a - &b).norm() / b.norm();
            assert!(rel < 1e-4, "{name} gradient relative error {rel}");
        }
    }
}

#[test]
fn orientation_factors_straighten_vertical_objects() {
    let table = CategoryTable::parse("bottle\tvertical\ncup\tvertical\nvase\tvertical\nperson\tvertical\n").unwrap();
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in 0..3 {
        let sim = SimulatorConfig { n_objects: 5, n_poses: 24, ..SimulatorConfig::default() };
        let noise = NoiseConfig { seed, ..NoiseConfig::default() };
        let kind = if seed % 2 == 0 { TrajectoryKind::Orbit } else { TrajectoryKind::Corridor };
        let ds = simulate(&sim, &table, seed + 40, kind, &noise).unwrap();
        let sol = solve_dataset::<f64>(&ds, &table, &SolveOptions::default()).unwrap();
        for (_, q) in sol.values.quadrics() {
            with.push(1.0 - q.cosine_similarity_z().unwrap());
        }
        for (_, q) in sol.standalone.quadrics() {
            without.push(1.0 - q.cosine_similarity_z().unwrap());
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&with) < mean(&without), "{} vs {}", mean(&with), mean(&without));
}

#[test]
fn behind_camera_factors_are_skipped() {
    let ds = three_pose_dataset("bottle", &[40.0, 42.0]);
    let g = build_graph::<f64>(&ds, &CategoryTable::default_table(), &GraphConfig::default()).unwrap();
    let mut v = Values::new();
    for (i, p) in ds.poses_gt.iter().enumerate() {
        v.insert_pose(i, *p);
    }
    // Far behind every camera.
    v.insert_quadric(0, ConstrainedDualQuadric::sphere(Vector3::new(20.0, 0.0, 0.0), 0.2).unwrap());
    let e = total_error(&g, &v).unwrap();
    assert!(e.is_finite());
    let (_, stats) = optimize(&g, &v, &SolverConfig::default()).unwrap();
    // Both box factors, plus the orientation factor of the shapeless sphere.
    assert_eq!(stats.degenerate_factors, 3);
    let strict = SolverConfig { degenerate_policy: DegeneratePolicy::Fail, ..SolverConfig::default() };
    assert!(matches!(optimize(&g, &v, &strict), Err(GraphError::DegenerateFactors(3))));
}

#[test]
fn non_finite_state_is_singular() {
    let ds = three_pose_dataset("bottle", &[40.0, 42.0]);
    let g = build_graph::<f64>(&ds, &CategoryTable::default_table(), &GraphConfig::default()).unwrap();
    let mut v = Values::new();
    for (i, p) in ds.poses_gt.iter().enumerate() {
        v.insert_pose(i, *p);
    }
    v.insert_pose(1, Pose::from_translation(Vector3::new(f64::NAN, 0.0, 0.0)));
    v.insert_quadric(0, ConstrainedDualQuadric::sphere(Vector3::zeros(), 0.2).unwrap());
    assert!(matches!(optimize(&g, &v, &SolverConfig::default()), Err(GraphError::SingularSystem)));
}

#[test]
fn single_precision_solve_runs() {
    let ds = noisy(9, TrajectoryKind::Orbit);
    let sol = solve_dataset::<f32>(&ds, &CategoryTable::default_table(), &SolveOptions::default()).unwrap();
    assert!(sol.stats.final_error <= sol.stats.initial_error);
    let poses: Vec<Pose<f64>> = sol.values.poses().iter().map(|p| p.cast()).collect();
    let odo = ate(&ds.dead_reckoning(), &ds.poses_gt, true).unwrap();
    assert!(ate(&poses, &ds.poses_gt, true).unwrap() < odo);
}
