use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gspf::evalkit::{evaluate, run_bench, write_bench_table};
use gspf::io::{read_sequence, segment_means, write_segment_means, write_sequence, TruthFile};
use gspf::report::RunInfo;
use gspf::simlab::{generate, Family, NoiseModel, SimulationSpec};
use gspf::{ChangePointSet, DetectionReport, Detector, DetectorConfig, LambdaScale};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{context}: {source}")]
    Detector { context: String, source: gspf::Error },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error("could not build thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Detector { source, .. } if !source.is_data_error() => 3,
            _ => 2,
        }
    }
}

trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError>;
}

impl<T> Context<T> for gspf::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|source| CliError::Detector { context: what.into(), source })
    }
}

#[derive(Parser)]
#[command(name = "gspf", version, about = "Multiple change-point detection for functional data sequences")]
struct Cli {
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect change points in a CSV of curves (one curve per row).
    Detect(DetectArgs),
    /// Generate a labeled synthetic dataset.
    Simulate(SimulateArgs),
    /// Compare a detection report with a truth file.
    Evaluate(EvaluateArgs),
    /// Monte-Carlo success rates over a grid of FDR levels.
    Bench(BenchArgs),
    /// Segment mean curves for plotting.
    Segments(SegmentsArgs),
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    /// The first CSV row holds grid coordinates.
    #[arg(long)]
    grid_header: bool,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 3.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.99)]
    fve: f64,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Scale::Relative)]
    lambda_scale: Scale,
    #[arg(long, value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    kappa_grid: Option<Vec<usize>>,
    /// Recorded in the report; detection itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Relative,
    Absolute,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 30)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// gp, tp, tp:<df> or iid; defaults to the family's usual noise.
    #[arg(long, value_parser = parse_noise)]
    noise: Option<NoiseModel>,
    /// Write grid coordinates as the first CSV row.
    #[arg(long)]
    grid_header: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Metrics path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// One or more families, comma separated; one table column each.
    #[arg(long, value_delimiter = ',', value_parser = parse_family, required = true)]
    family: Vec<Family>,
    #[arg(long)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.01, 1e-3, 1e-4, 1e-5])]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 30)]
    d: usize,
    /// Seed of the first replication; replication i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Table path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    grid_header: bool,
    #[arg(long)]
    report: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// The part of a report or truth file that evaluation and plotting need.
#[derive(serde::Deserialize)]
struct ChangePoints {
    change_points: Vec<usize>,
}

fn read_change_points(path: &Path) -> Result<ChangePointSet, CliError> {
    let file: ChangePoints = read_json(path)?;
    ChangePointSet::new(file.change_points).context(path.display().to_string())
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: gspf::Error| e.to_string())
}

fn parse_noise(s: &str) -> Result<NoiseModel, String> {
    s.parse().map_err(|e: gspf::Error| e.to_string())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::File { path: path.to_owned(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::File { path: path.to_owned(), source })
}

/// Runs `f` on a buffered file or on stdout.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> gspf::Result<()>) -> Result<(), CliError> {
    let what = path.map_or_else(|| "stdout".to_string(), |p| p.display().to_string());
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w).and_then(|_| Ok(w.flush()?)).context(what)
        }
        None => {
            let mut w = io::stdout().lock();
            f(&mut w).and_then(|_| Ok(w.flush()?)).context(what)
        }
    }
}

fn write_json<T: serde::Serialize>(w: &mut dyn Write, value: &T) -> gspf::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?)
        .map_err(gspf::Error::from)
        .context(path.display().to_string())
}

fn detect(args: &DetectArgs, threads: Option<usize>) -> Result<(), CliError> {
    let started = Instant::now();
    let input = args.input.display().to_string();
    let seq = read_sequence(open(&args.input)?, args.grid_header).context(&input)?;
    let mut config = DetectorConfig::default()
        .with_alpha(args.alpha)
        .with_gamma(args.gamma)
        .with_fve_threshold(args.fve);
    if let Some(grid) = &args.lambda_grid {
        config.lambda_grid = grid.clone();
    }
    config.lambda_scale = match args.lambda_scale {
        Scale::Relative => LambdaScale::Relative,
        Scale::Absolute => LambdaScale::Absolute,
    };
    if let Some(grid) = &args.eta_grid {
        config.eta_grid = grid.clone();
    }
    if let Some(grid) = &args.kappa_grid {
        config.kappa_grid = grid.clone();
    }
    let detector = Detector::new(config.clone()).context("configuration")?;
    let detection = detector.detect(&seq).context(&input)?;
    let info = RunInfo {
        seed: args.seed,
        threads,
        timing_ms: started.elapsed().as_millis() as u64,
    };
    let report = DetectionReport::new(&detection, &config, info);
    log::info!("{} change points in {} ms", report.change_points.len(), info.timing_ms);
    with_output(args.output.as_deref(), |w| write_json(w, &report))
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut spec = SimulationSpec::new(args.family, args.m, args.seed).with_d(args.d);
    if let Some(noise) = args.noise {
        spec = spec.with_noise(noise);
    }
    let ds = generate(&spec).context("simulation")?;
    with_output(Some(&args.out), |w| write_sequence(w, &ds.seq, args.grid_header))?;
    with_output(Some(&args.truth), |w| write_json(w, &TruthFile::from_dataset(&ds, &spec)))
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), CliError> {
    let est = read_change_points(&args.report)?;
    let truth = read_change_points(&args.truth)?;
    let metrics = evaluate(&est, &truth);
    with_output(args.out.as_deref(), |w| write_json(w, &metrics))
}

fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let detector = Detector::default();
    let cells: Vec<_> = args
        .family
        .iter()
        .map(|&family| {
            let spec = SimulationSpec::new(family, args.m, args.seed).with_d(args.d);
            spec.validate().context("benchmark")?;
            let cell = run_bench(&spec, args.reps, &args.alphas, &detector);
            let failed = cell.failures().count();
            if failed > 0 {
                log::warn!("{family}: {failed} of {} replications failed", args.reps);
            }
            Ok(cell)
        })
        .collect::<Result<_, CliError>>()?;
    with_output(args.out.as_deref(), |w| write_bench_table(w, &cells))
}

fn segments(args: &SegmentsArgs) -> Result<(), CliError> {
    let input = args.input.display().to_string();
    let seq = read_sequence(open(&args.input)?, args.grid_header).context(&input)?;
    let cps = read_change_points(&args.report)?;
    let rows = segment_means(&seq, &cps).context(&input)?;
    with_output(args.out.as_deref(), |w| write_segment_means(w, &rows))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Detect(args) => detect(args, cli.threads),
        Command::Simulate(args) => simulate(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Bench(args) => bench(args),
        Command::Segments(args) => segments(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
