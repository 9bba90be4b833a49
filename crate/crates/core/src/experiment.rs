//! Multi-trial experiments on simulated data: paired solves with and without
//! orientation factors, aggregate tables and orientation-noise sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{config_digest, Dataset};
use crate::evaluation::{evaluate, EvalError, MetricReport, Truth};
use crate::geometry::ConstrainedDualQuadric;
use crate::graph::{optimize, solve_dataset, solve_standalone, GraphError, SolveOptions, SolveStats, Termination, Values};
use crate::semantics::CategoryTable;
use crate::simulator::{derive_seed, simulate, NoiseConfig, SimError, SimulatorConfig, TrajectoryKind};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "QUADRIC_ORIENT_THREADS";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("trial {trial}: {source}")]
    Simulation { trial: TrialId, source: SimError },
    #[error("trial {trial}: {source}")]
    Solver { trial: TrialId, source: GraphError },
    #[error("trial {trial}: {source}")]
    Evaluation { trial: TrialId, source: EvalError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryChoice {
    /// Alternate orbit and corridor by trajectory index.
    Auto,
    Orbit,
    Corridor,
}

impl TrajectoryChoice {
    pub fn kind(self, trajectory: usize) -> TrajectoryKind {
        match self {
            Self::Orbit => TrajectoryKind::Orbit,
            Self::Corridor => TrajectoryKind::Corridor,
            Self::Auto if trajectory.is_multiple_of(2) => TrajectoryKind::Orbit,
            Self::Auto => TrajectoryKind::Corridor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub trajectories: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub trajectory: TrajectoryChoice,
    pub simulator: SimulatorConfig,
    /// Noise levels; the seed is replaced per trial.
    pub noise: NoiseConfig,
    pub solve: SolveOptions,
    pub align_ate: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trajectories: 10,
            seeds: 3,
            base_seed: 0,
            trajectory: TrajectoryChoice::Auto,
            simulator: SimulatorConfig::default(),
            noise: NoiseConfig::default(),
            solve: SolveOptions::default(),
            align_ate: true,
        }
    }
}

impl ExperimentConfig {
    /// 50 trajectories with 5 seeds each.
    pub fn full_scale() -> Self {
        Self { trajectories: 50, seeds: 5, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trajectories == 0 || self.seeds == 0 {
            return Err(ExperimentError::InvalidConfig("at least one trajectory and one seed are required".into()));
        }
        if self.simulator.n_objects == 0 {
            return Err(ExperimentError::InvalidConfig("at least one object is required".into()));
        }
        Ok(())
    }

    /// Short digest of the canonical JSON form of the configuration.
    pub fn config_hash(&self) -> String {
        config_digest(self)
    }

    pub fn trials(&self) -> Vec<TrialSpec> {
        let mut out = Vec::with_capacity(self.trajectories * self.seeds);
        for t in 0..self.trajectories {
            let scene_seed = derive_seed(self.base_seed, t as u64);
            for s in 0..self.seeds {
                out.push(TrialSpec {
                    id: TrialId { trajectory: t, seed: s },
                    scene_seed,
                    noise_seed: derive_seed(scene_seed, s as u64 + 1),
                    kind: self.trajectory.kind(t),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialId {
    pub trajectory: usize,
    pub seed: usize,
}

impl fmt::Display for TrialId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}-s{}", self.trajectory, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub id: TrialId,
    pub scene_seed: u64,
    pub noise_seed: u64,
    pub kind: TrajectoryKind,
}

/// Simulates the dataset of one trial.
pub fn trial_dataset(config: &ExperimentConfig, table: &CategoryTable, spec: &TrialSpec) -> Result<Dataset, SimError> {
    let noise = NoiseConfig { seed: spec.noise_seed, ..config.noise.clone() };
    simulate(&config.simulator, table, spec.scene_seed, spec.kind, &noise)
}

/// Ground truth of a simulated dataset in the form the metrics need.
pub fn dataset_truth<'a>(dataset: &'a Dataset, table: &CategoryTable) -> Truth<'a> {
    Truth {
        poses: &dataset.poses_gt,
        boxes: dataset.landmarks_gt.iter().map(|l| (l.id, l.box3d())).collect(),
        labels: dataset.landmarks_gt.iter().map(|l| (l.id, (l.label.clone(), table.lookup(&l.label)))).collect(),
    }
}

fn quadric_map(values: &Values<f64>) -> BTreeMap<u64, ConstrainedDualQuadric<f64>> {
    values.quadrics().map(|(id, q)| (id, *q)).collect()
}

/// Metrics of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub metrics: MetricReport,
    pub iterations: usize,
    pub final_error: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub spec: TrialSpec,
    pub standalone: VariantResult,
    /// Present when orientation factors are enabled.
    pub oriented: Option<VariantResult>,
}

/// Per-metric summary over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub ate_m: f64,
    pub landmark_position_m: f64,
    pub landmark_shape: f64,
    pub landmark_quality: f64,
    /// Pooled over all landmarks with an assigned orientation target.
    pub axis_deviation_deg: Option<f64>,
}

/// Mean and sample standard deviation of each metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a MetricReport>) -> Self {
        let reports: Vec<&MetricReport> = reports.into_iter().collect();
        let col = |f: fn(&MetricReport) -> f64| mean_std(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (ate, ate_sd) = col(|r| r.ate_m);
        let (pos, pos_sd) = col(|r| r.landmark_position_m);
        let (shape, shape_sd) = col(|r| r.landmark_shape);
        let (quality, quality_sd) = col(|r| r.landmark_quality);
        let devs: Vec<f64> =
            reports.iter().flat_map(|r| r.landmarks.iter().filter_map(|l| l.axis_deviation_deg)).collect();
        let (dev, dev_sd) = mean_std(&devs);
        let some = |v: f64| (!devs.is_empty()).then_some(v);
        Self {
            trials: reports.len(),
            mean: MetricSummary {
                ate_m: ate,
                landmark_position_m: pos,
                landmark_shape: shape,
                landmark_quality: quality,
                axis_deviation_deg: some(dev),
            },
            std: MetricSummary {
                ate_m: ate_sd,
                landmark_position_m: pos_sd,
                landmark_shape: shape_sd,
                landmark_quality: quality_sd,
                axis_deviation_deg: some(dev_sd),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub standalone: Aggregate,
    pub oriented: Option<Aggregate>,
}

/// Number of worker threads: the value of [`THREADS_ENV`] if set to a
/// positive integer, otherwise the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn variant(
    values: &Values<f64>,
    stats: &SolveStats,
    truth: &Truth<'_>,
    config: &ExperimentConfig,
    spec: &TrialSpec,
    hash: &str,
) -> Result<VariantResult, ExperimentError> {
    let mut metrics = evaluate(&values.poses(), &quadric_map(values), truth, config.align_ate)
        .map_err(|source| ExperimentError::Evaluation { trial: spec.id, source })?;
    metrics.seed = spec.noise_seed;
    metrics.config_hash = hash.to_string();
    Ok(VariantResult {
        metrics,
        iterations: stats.iterations,
        final_error: stats.final_error,
        termination: stats.termination,
    })
}

/// Simulates, solves and scores one trial.
pub fn run_trial(
    config: &ExperimentConfig,
    table: &CategoryTable,
    spec: &TrialSpec,
) -> Result<TrialResult, ExperimentError> {
    let hash = config.config_hash();
    let dataset =
        trial_dataset(config, table, spec).map_err(|source| ExperimentError::Simulation { trial: spec.id, source })?;
    let solution = solve_dataset::<f64>(&dataset, table, &config.solve)
        .map_err(|source| ExperimentError::Solver { trial: spec.id, source })?;
    let truth = dataset_truth(&dataset, table);
    let standalone = variant(&solution.standalone, &solution.standalone_stats, &truth, config, spec, &hash)?;
    let oriented = if config.solve.graph.use_orientation_factors {
        Some(variant(&solution.values, &solution.stats, &truth, config, spec, &hash)?)
    } else {
        None
    };
    log::info!("trial {} done", spec.id);
    Ok(TrialResult { spec: *spec, standalone, oriented })
}

/// Runs every trajectory/seed combination on a bounded worker pool. Results
/// are ordered by trajectory, then seed, regardless of scheduling.
pub fn run_trials(config: &ExperimentConfig, table: &CategoryTable) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let specs = config.trials();
    let results: Vec<Result<TrialResult, ExperimentError>> =
        with_pool(|| specs.par_iter().map(|s| run_trial(config, table, s)).collect())?;
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let standalone = Aggregate::from_reports(trials.iter().map(|t| &t.standalone.metrics));
    let oriented = config
        .solve
        .graph
        .use_orientation_factors
        .then(|| Aggregate::from_reports(trials.iter().filter_map(|t| t.oriented.as_ref().map(|v| &v.metrics))));
    Ok(ExperimentReport { config_hash: config.config_hash(), config: config.clone(), trials, standalone, oriented })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

const VARIANT_COLUMNS: [&str; 6] = ["ate_m", "position_m", "shape", "quality", "axis_deviation_deg", "iterations"];

fn summary_cells(s: &MetricSummary) -> Vec<String> {
    vec![
        s.ate_m.to_string(),
        s.landmark_position_m.to_string(),
        s.landmark_shape.to_string(),
        s.landmark_quality.to_string(),
        opt(s.axis_deviation_deg),
        String::new(),
    ]
}

fn variant_cells(v: Option<&VariantResult>) -> Vec<String> {
    match v {
        None => vec![String::new(); VARIANT_COLUMNS.len()],
        Some(v) => {
            let m = &v.metrics;
            vec![
                m.ate_m.to_string(),
                m.landmark_position_m.to_string(),
                m.landmark_shape.to_string(),
                m.landmark_quality.to_string(),
                opt(m.axis_deviation_deg),
                v.iterations.to_string(),
            ]
        }
    }
}

impl ExperimentReport {
    /// One row per trial followed by a `mean` row. Standalone and
    /// orientation-factor results sit side by side.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["trial", "trajectory", "seed", "kind", "scene_seed", "noise_seed"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        for prefix in ["standalone", "orientation"] {
            header.extend(VARIANT_COLUMNS.iter().map(|c| format!("{prefix}_{c}")));
        }
        header.push("config_hash".into());
        let mut out = header.join(",") + "\n";
        for t in &self.trials {
            let mut row = vec![
                t.spec.id.to_string(),
                t.spec.id.trajectory.to_string(),
                t.spec.id.seed.to_string(),
                serde_json::to_value(t.spec.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                t.spec.scene_seed.to_string(),
                t.spec.noise_seed.to_string(),
            ];
            row.extend(variant_cells(Some(&t.standalone)));
            row.extend(variant_cells(t.oriented.as_ref()));
            row.push(self.config_hash.clone());
            out += &(row.join(",") + "\n");
        }
        let mut row = vec!["mean".to_string(), String::new(), String::new(), String::new(), String::new(), String::new()];
        row.extend(summary_cells(&self.standalone.mean));
        match &self.oriented {
            Some(a) => row.extend(summary_cells(&a.mean)),
            None => row.extend(vec![String::new(); VARIANT_COLUMNS.len()]),
        }
        row.push(self.config_hash.clone());
        out += &(row.join(",") + "\n");
        out
    }

    pub fn to_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Relative reduction of the pooled axis deviation achieved by the
    /// orientation factors.
    pub fn axis_deviation_reduction(&self) -> Option<f64> {
        let off = self.standalone.mean.axis_deviation_deg?;
        let on = self.oriented.as_ref()?.mean.axis_deviation_deg?;
        Some(1.0 - on / off)
    }

    /// Writes `trials.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trials.csv"), self.to_csv())?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub mean_ate_m: f64,
    pub std_ate_m: f64,
    pub mean_axis_deviation_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub standalone_ate_m: f64,
    pub rows: Vec<SweepRow>,
}

/// Solves every trial once per orientation standard deviation in `sigmas`.
///
/// The first solve stage does not depend on the orientation noise, so it is
/// shared by all values of `sigmas`.
pub fn sweep_sigma(
    config: &ExperimentConfig,
    table: &CategoryTable,
    sigmas: &[f64],
) -> Result<SweepReport, ExperimentError> {
    config.validate()?;
    if sigmas.is_empty() {
        return Err(ExperimentError::InvalidConfig("the sigma list is empty".into()));
    }
    if let Some(bad) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(ExperimentError::InvalidConfig(format!("sigma {bad} is not positive")));
    }
    let mut config = config.clone();
    config.solve.graph.use_orientation_factors = true;
    let hash = config.config_hash();
    let specs = config.trials();
    let run = |spec: &TrialSpec| -> Result<(MetricReport, Vec<MetricReport>), ExperimentError> {
        let dataset = trial_dataset(&config, table, spec)
            .map_err(|source| ExperimentError::Simulation { trial: spec.id, source })?;
        let solver_err = |source| ExperimentError::Solver { trial: spec.id, source };
        let base = solve_standalone::<f64>(&dataset, table, &config.solve).map_err(solver_err)?;
        let truth = dataset_truth(&dataset, table);
        let standalone = variant(&base.standalone, &base.standalone_stats, &truth, &config, spec, &hash)?.metrics;
        let mut per_sigma = Vec::with_capacity(sigmas.len());
        for sigma in sigmas {
            let graph = base.graph.with_orientation_sigma(*sigma).map_err(solver_err)?;
            let (values, stats) = optimize(&graph, &base.standalone, &config.solve.solver).map_err(solver_err)?;
            per_sigma.push(variant(&values, &stats, &truth, &config, spec, &hash)?.metrics);
        }
        Ok((standalone, per_sigma))
    };
    let results: Vec<Result<_, ExperimentError>> = with_pool(|| specs.par_iter().map(run).collect())?;
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows = sigmas
        .iter()
        .enumerate()
        .map(|(k, sigma)| {
            let agg = Aggregate::from_reports(results.iter().map(|(_, r)| &r[k]));
            SweepRow {
                sigma: *sigma,
                mean_ate_m: agg.mean.ate_m,
                std_ate_m: agg.std.ate_m,
                mean_axis_deviation_deg: agg.mean.axis_deviation_deg,
            }
        })
        .collect();
    let standalone_ate_m = Aggregate::from_reports(results.iter().map(|(s, _)| s)).mean.ate_m;
    Ok(SweepReport { config_hash: hash, standalone_ate_m, rows })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,mean_ate_m,std_ate_m,mean_axis_deviation_deg,config_hash\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.sigma,
                r.mean_ate_m,
                r.std_ate_m,
                opt(r.mean_axis_deviation_deg),
                self.config_hash
            );
        }
        out
    }

    /// Max over min of the mean ATE across rows.
    pub fn ate_ratio(&self) -> f64 {
        let ates = self.rows.iter().map(|r| r.mean_ate_m);
        let max = ates.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = ates.fold(f64::INFINITY, f64::min);
        max / min
    }

    /// Line plot of mean ATE against σ on a logarithmic x axis.
    pub fn to_svg(&self) -> String {
        let points: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.sigma, r.mean_ate_m)).collect();
        line_plot_svg(&points, "orientation factor sigma", "mean ATE [m]", &self.config_hash)
    }

    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), self.to_csv())?;
        std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("sweep.svg"), self.to_svg())?;
        Ok(())
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG line plot with a log10 x axis. Output depends only on the
/// inputs.
pub fn line_plot_svg(points: &[(f64, f64)], x_label: &str, y_label: &str, note: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 80.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 20.0;
    const BOTTOM: f64 = 60.0;
    let logs: Vec<f64> = points.iter().map(|(x, _)| x.log10()).collect();
    let (mut x0, mut x1) = (
        logs.iter().copied().fold(f64::INFINITY, f64::min).floor(),
        logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil(),
    );
    if !(x1 > x0) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let (mut y0, mut y1) = (
        points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let pad = if y1 > y0 { 0.1 * (y1 - y0) } else { 0.1 * y0.abs().max(1e-3) };
    y0 -= pad;
    y1 += pad;
    let px = |lx: f64| LEFT + (lx - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<desc>{}</desc>", escape(note));
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (bx, by) = (LEFT, H - BOTTOM);
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{:.2}" y2="{by}" stroke="black"/>"#, W - RIGHT);
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{bx}" y2="{TOP}" stroke="black"/>"#);
    let mut e = x0 as i32;
    while e as f64 <= x1 {
        let x = px(e as f64);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{by}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, by + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"#, by + 20.0);
        e += 1;
    }
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let yy = py(y);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{yy:.2}" x2="{bx}" y2="{yy:.2}" stroke="black"/>"#, bx - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.4}</text>"#, bx - 8.0, yy + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(y_label)
    );
    let coords: Vec<String> =
        points.iter().zip(&logs).map(|((_, y), lx)| format!("{:.2},{:.2}", px(*lx), py(*y))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, coords.join(" "));
    for c in &coords {
        let (x, y) = c.split_once(',').expect("formatted pair");
        let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="steelblue"/>"#);
    }
    s.push_str("</svg>\n");
    s
}
