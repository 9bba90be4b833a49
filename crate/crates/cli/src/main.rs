use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quadric_orient::dataset::{config_digest, Dataset, DatasetError, Estimate};
use quadric_orient::evaluation::{evaluate, EvalError, MetricReport};
use quadric_orient::experiment::{
    dataset_truth, run_trials, sweep_sigma, Aggregate, ExperimentConfig, ExperimentError, TrajectoryChoice,
};
use quadric_orient::factors::OrientationTarget;
use quadric_orient::graph::{solve_dataset, DegeneratePolicy, GraphError, SolveOptions};
use quadric_orient::semantics::CategoryTable;
use quadric_orient::simulator::{derive_seed, simulate, NoiseConfig, SimError, SimulatorConfig, TrajectoryKind};
use quadric_orient::{Solution32, Solution64};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATASET: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Parser)]
#[command(name = "quadric-orient", version, about = "Quadric landmark SLAM with semantic orientation factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Solve a dataset and write the estimate.
    Solve(SolveArgs),
    /// Compare an estimate with a ground-truth dataset.
    Eval(EvalArgs),
    /// Run the paired standalone / orientation-factor trial grid.
    Trials(TrialsArgs),
    /// Sweep the orientation factor noise over a trial grid.
    SweepSigma(SweepArgs),
    /// Summarize the outputs found in a directory.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Trajectory {
    Orbit,
    Corridor,
}

impl From<Trajectory> for TrajectoryKind {
    fn from(t: Trajectory) -> Self {
        match t {
            Trajectory::Orbit => TrajectoryKind::Orbit,
            Trajectory::Corridor => TrajectoryKind::Corridor,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    objects: usize,
    #[arg(long, default_value_t = 40)]
    poses: usize,
    #[arg(long, value_enum, default_value_t = Trajectory::Orbit)]
    trajectory: Trajectory,
    /// Measurement noise seed; derived from --seed when omitted.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Emit exact measurements.
    #[arg(long)]
    noiseless: bool,
    /// Category table used for the object vocabulary.
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    categories: PathBuf,
    #[arg(long)]
    no_orientation_factors: bool,
    #[arg(long)]
    sigma_orient: Option<f64>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    /// Fail instead of skipping factors whose geometry is degenerate.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    estimate: PathBuf,
    /// Dataset holding the ground truth.
    #[arg(long)]
    truth: PathBuf,
    /// Orientation targets to score against; defaults to those in the estimate.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Skip the rigid alignment before computing ATE.
    #[arg(long)]
    no_align: bool,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 10)]
    trajectories: usize,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value_t = 8)]
    objects: usize,
    #[arg(long, default_value_t = 40)]
    poses: usize,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrialsArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    no_orientation_factors: bool,
    #[arg(long)]
    sigma_orient: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    sigmas: Vec<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }
}

fn config_error(msg: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_CONFIG, anyhow::anyhow!("{msg}"))
}

fn dataset_error(e: DatasetError, path: &Path) -> Failure {
    Failure::new(EXIT_DATASET, anyhow::Error::new(e).context(format!("reading {}", path.display())))
}

fn graph_failure(e: GraphError) -> Failure {
    let code = match e {
        GraphError::InvalidConfig(_) => EXIT_CONFIG,
        GraphError::InconsistentDataset(_) | GraphError::Semantics(_) => EXIT_DATASET,
        _ => EXIT_SOLVER,
    };
    Failure::new(code, e)
}

fn sim_failure(e: SimError) -> Failure {
    let code = match e {
        SimError::InvalidConfig(_) => EXIT_CONFIG,
        SimError::PlacementFailure { .. } => EXIT_DATASET,
    };
    Failure::new(code, e)
}

fn experiment_failure(e: ExperimentError) -> Failure {
    let code = match &e {
        ExperimentError::InvalidConfig(_) => EXIT_CONFIG,
        ExperimentError::Simulation { source: SimError::InvalidConfig(_), .. } => EXIT_CONFIG,
        ExperimentError::Simulation { .. } | ExperimentError::Io(_) | ExperimentError::Json(_) => EXIT_DATASET,
        ExperimentError::Solver { source: GraphError::InvalidConfig(_), .. } => EXIT_CONFIG,
        ExperimentError::Solver { .. } | ExperimentError::Evaluation { .. } => EXIT_SOLVER,
    };
    Failure::new(code, e)
}

fn io_failure(e: std::io::Error, path: &Path) -> Failure {
    Failure::new(EXIT_DATASET, anyhow::Error::new(e).context(format!("writing {}", path.display())))
}

fn load_table(path: Option<&Path>) -> Result<CategoryTable, Failure> {
    let Some(path) = path else {
        return Ok(CategoryTable::default_table());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading category table {}", path.display()))
        .map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    CategoryTable::parse(&text)
        .with_context(|| format!("parsing category table {}", path.display()))
        .map_err(|e| Failure::new(EXIT_CONFIG, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(e, dir))?;
    }
    std::fs::write(path, contents).map_err(|e| io_failure(e, path))
}

fn to_json<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn check_sigma(sigma: Option<f64>) -> Result<(), Failure> {
    match sigma {
        Some(s) if !(s > 0.0 && s.is_finite()) => Err(config_error(format!("--sigma-orient {s} is not positive"))),
        _ => Ok(()),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let table = load_table(args.categories.as_deref())?;
    let sim = SimulatorConfig { n_objects: args.objects, n_poses: args.poses, ..SimulatorConfig::default() };
    let noise_seed = args.noise_seed.unwrap_or_else(|| derive_seed(args.seed, 1));
    let noise = if args.noiseless { NoiseConfig::noiseless(noise_seed) } else { NoiseConfig { seed: noise_seed, ..NoiseConfig::default() } };
    let dataset = simulate(&sim, &table, args.seed, args.trajectory.into(), &noise).map_err(sim_failure)?;
    let json = dataset.to_json().map_err(|e| dataset_error(e, &args.out))?;
    write_file(&args.out, &(json + "\n"))?;
    log::info!("wrote {} poses and {} tracks to {}", dataset.pose_count(), dataset.tracks.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct SolveHashInput<'a> {
    dataset: String,
    categories: Vec<(&'a str, OrientationTarget)>,
    options: &'a SolveOptions,
    precision: &'a str,
}

fn table_entries(table: &CategoryTable) -> Vec<(&str, OrientationTarget)> {
    table.labels().collect()
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    check_sigma(args.sigma_orient)?;
    let table = load_table(Some(&args.categories))?;
    let dataset = Dataset::load(&args.dataset).map_err(|e| dataset_error(e, &args.dataset))?;
    let mut options = SolveOptions::default();
    options.graph.use_orientation_factors = !args.no_orientation_factors;
    if let Some(s) = args.sigma_orient {
        options.graph.orientation_sigma = s;
    }
    if args.strict {
        options.solver.degenerate_policy = DegeneratePolicy::Fail;
    }
    let precision = match args.precision {
        Precision::F32 => "f32",
        Precision::F64 => "f64",
    };
    let hash = config_digest(&SolveHashInput {
        dataset: dataset.config_hash.clone().unwrap_or_else(|| config_digest(&dataset.to_json().unwrap_or_default())),
        categories: table_entries(&table),
        options: &options,
        precision,
    });
    let estimate = match args.precision {
        Precision::F64 => {
            let s: Solution64 = solve_dataset(&dataset, &table, &options).map_err(graph_failure)?;
            s.estimate(hash.clone())
        }
        Precision::F32 => {
            let s: Solution32 = solve_dataset(&dataset, &table, &options).map_err(graph_failure)?;
            s.estimate(hash.clone())
        }
    };
    let out = &args.out;
    let estimate_path = out.join("estimate.json");
    let json = estimate.to_json().map_err(|e| dataset_error(e, &estimate_path))?;
    write_file(&estimate_path, &(json + "\n"))?;
    if let Some(stats) = &estimate.stats {
        log::info!(
            "{} iterations, error {:.6e} -> {:.6e} ({:?})",
            stats.iterations,
            stats.initial_error,
            stats.final_error,
            stats.termination
        );
    }
    if !dataset.poses_gt.is_empty() && !dataset.landmarks_gt.is_empty() {
        let report = evaluate_estimate(&estimate, &dataset, Some(&table), true).map_err(|e| Failure::new(EXIT_SOLVER, e))?;
        write_file(&out.join("metrics.json"), &to_json(&report))?;
    }
    Ok(())
}

fn evaluate_estimate(
    estimate: &Estimate,
    truth: &Dataset,
    table: Option<&CategoryTable>,
    align: bool,
) -> Result<MetricReport, EvalError> {
    let quadrics = estimate.quadrics().map_err(|_| EvalError::NoLandmarks)?;
    let mut truth_view = dataset_truth(truth, table.unwrap_or(&CategoryTable::default_table()));
    if table.is_none() {
        for l in &estimate.landmarks {
            if let Some(entry) = truth_view.labels.get_mut(&l.id) {
                entry.1 = l.target;
            }
        }
    }
    let mut report = evaluate(&estimate.poses, &quadrics, &truth_view, align)?;
    report.config_hash = estimate.config_hash.clone();
    report.seed = truth.noise.as_ref().map(|n| n.seed).unwrap_or_default();
    Ok(report)
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let table = args.categories.as_deref().map(|p| load_table(Some(p))).transpose()?;
    let text = std::fs::read_to_string(&args.estimate).map_err(|e| dataset_error(e.into(), &args.estimate))?;
    let estimate = Estimate::from_json(&text).map_err(|e| dataset_error(e, &args.estimate))?;
    let truth = Dataset::load(&args.truth).map_err(|e| dataset_error(e, &args.truth))?;
    let report = evaluate_estimate(&estimate, &truth, table.as_ref(), !args.no_align)
        .map_err(|e| Failure::new(EXIT_DATASET, anyhow::Error::new(e).context("estimate does not match the truth")))?;
    print!("{}", to_json(&report));
    Ok(())
}

fn grid_config(grid: &GridArgs) -> ExperimentConfig {
    ExperimentConfig {
        trajectories: grid.trajectories,
        seeds: grid.seeds,
        base_seed: grid.base_seed,
        trajectory: TrajectoryChoice::Auto,
        simulator: SimulatorConfig { n_objects: grid.objects, n_poses: grid.poses, ..SimulatorConfig::default() },
        ..ExperimentConfig::default()
    }
}

fn cmd_trials(args: TrialsArgs) -> Result<(), Failure> {
    check_sigma(args.sigma_orient)?;
    let table = load_table(args.grid.categories.as_deref())?;
    let mut config = grid_config(&args.grid);
    config.solve.graph.use_orientation_factors = !args.no_orientation_factors;
    if let Some(s) = args.sigma_orient {
        config.solve.graph.orientation_sigma = s;
    }
    let report = run_trials(&config, &table).map_err(experiment_failure)?;
    report.write(&args.grid.out).map_err(experiment_failure)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let table = load_table(args.grid.categories.as_deref())?;
    let config = grid_config(&args.grid);
    let report = sweep_sigma(&config, &table, &args.sigmas).map_err(experiment_failure)?;
    report.write(&args.grid.out).map_err(experiment_failure)?;
    print!("{}", report.to_csv());
    Ok(())
}

const METRIC_COLUMNS: [&str; 6] =
    ["ate_m", "landmark_position_m", "landmark_shape", "landmark_quality", "axis_deviation_deg", "missing_landmarks"];

fn metric_cells(r: &MetricReport) -> Vec<String> {
    vec![
        r.ate_m.to_string(),
        r.landmark_position_m.to_string(),
        r.landmark_shape.to_string(),
        r.landmark_quality.to_string(),
        r.axis_deviation_deg.map(|v| v.to_string()).unwrap_or_default(),
        r.missing_landmarks.to_string(),
    ]
}

fn find_metrics(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_metrics(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "metrics.json") {
            out.push(path);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsSummary<'a> {
    runs: Vec<MetricsRun<'a>>,
    aggregate: Aggregate,
}

#[derive(Serialize)]
struct MetricsRun<'a> {
    source: String,
    metrics: &'a MetricReport,
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let dir = &args.input;
    if !dir.is_dir() {
        return Err(config_error(format!("{} is not a directory", dir.display())));
    }
    let read_err = |e: anyhow::Error, path: &Path| {
        Failure::new(EXIT_DATASET, e.context(format!("reading {}", path.display())))
    };
    let experiment = dir.join("report.json");
    if experiment.is_file() {
        let text = std::fs::read_to_string(&experiment).map_err(|e| read_err(e.into(), &experiment))?;
        let report: quadric_orient::experiment::ExperimentReport =
            serde_json::from_str(&text).map_err(|e| read_err(e.into(), &experiment))?;
        match args.format {
            Format::Csv => print!("{}", report.to_csv()),
            Format::Json => print!("{}", to_json(&report)),
        }
        return Ok(());
    }
    let sweep = dir.join("sweep.json");
    if sweep.is_file() {
        let text = std::fs::read_to_string(&sweep).map_err(|e| read_err(e.into(), &sweep))?;
        let report: quadric_orient::experiment::SweepReport =
            serde_json::from_str(&text).map_err(|e| read_err(e.into(), &sweep))?;
        match args.format {
            Format::Csv => print!("{}", report.to_csv()),
            Format::Json => print!("{}", to_json(&report)),
        }
        return Ok(());
    }
    let mut paths = Vec::new();
    find_metrics(dir, &mut paths).map_err(|e| read_err(e.into(), dir))?;
    if paths.is_empty() {
        return Err(Failure::new(
            EXIT_DATASET,
            anyhow::anyhow!("no report.json, sweep.json or metrics.json under {}", dir.display()),
        ));
    }
    let mut reports = Vec::with_capacity(paths.len());
    for path in &paths {
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.into(), path))?;
        let report: MetricReport = serde_json::from_str(&text).map_err(|e| read_err(e.into(), path))?;
        reports.push(report);
    }
    let sources: Vec<String> = paths
        .iter()
        .map(|p| p.parent().and_then(|d| d.strip_prefix(dir).ok()).map(|d| d.display().to_string()).unwrap_or_default())
        .map(|s| if s.is_empty() { ".".into() } else { s })
        .collect();
    let aggregate = Aggregate::from_reports(&reports);
    match args.format {
        Format::Csv => {
            let mut out = format!("source,seed,{},config_hash\n", METRIC_COLUMNS.join(","));
            for (source, r) in sources.iter().zip(&reports) {
                let _ = writeln!(out, "{source},{},{},{}", r.seed, metric_cells(r).join(","), r.config_hash);
            }
            let m = &aggregate.mean;
            let _ = writeln!(
                out,
                "mean,,{},{},{},{},{},,",
                m.ate_m,
                m.landmark_position_m,
                m.landmark_shape,
                m.landmark_quality,
                m.axis_deviation_deg.map(|v| v.to_string()).unwrap_or_default(),
            );
            print!("{out}");
        }
        Format::Json => {
            let runs = sources.into_iter().zip(&reports).map(|(source, metrics)| MetricsRun { source, metrics }).collect();
            print!("{}", to_json(&MetricsSummary { runs, aggregate }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Trials(a) => cmd_trials(a),
        Command::SweepSigma(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
