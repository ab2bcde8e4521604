mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// River stage surrogate: simulate, train, evaluate and benchmark.
#[derive(Debug, Parser)]
#[command(name = "stagecast", version, about)]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario file.
    Scenario(ScenarioArgs),
    /// Run the reference solver and write a field file.
    Simulate(SimulateArgs),
    /// Train a surrogate on a solved field.
    Train(TrainArgs),
    /// Store a bilinear interpolant of a field as a checkpoint.
    Interpolant(InterpolantArgs),
    /// Score a checkpoint against a field.
    Eval(EvalArgs),
    /// Time the reference solver against surrogate inference.
    Benchmark(BenchmarkArgs),
    /// Train the base, fourier_only and full configurations side by side.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioKind {
    FloodWave,
    SharpPulse,
    LakeAtRest,
    UniformFlow,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "flood-wave")]
    pub kind: ScenarioKind,
    /// Number of stations, 0.74 mi apart.
    #[arg(long, default_value_t = 20)]
    pub stations: usize,
    /// Peak discharge over baseflow (flood-wave kinds).
    #[arg(long, default_value_t = 3.0)]
    pub peak_factor: f64,
    /// Depth for lake-at-rest, ft.
    #[arg(long, default_value_t = 10.0)]
    pub depth: f64,
    /// Discharge for uniform flow, cfs.
    #[arg(long, default_value_t = 20_000.0)]
    pub discharge: f64,
    /// Simulated duration for lake-at-rest and uniform flow, hours.
    #[arg(long, default_value_t = 24.0)]
    pub hours: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 400)]
    pub cells: usize,
    #[arg(long, default_value_t = 0.9)]
    pub cfl: f64,
    /// Drop friction and bed slope source terms.
    #[arg(long)]
    pub frictionless: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Six blocks of width 512, batch 1024.
    Large,
    /// Three blocks of width 64, batch 256.
    Compact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Starting point for every other training flag.
    #[arg(long, value_enum, default_value = "large")]
    pub preset: Preset,
    /// Physics loss weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fourier feature scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Feed raw normalised coordinates instead of Fourier features.
    #[arg(long)]
    pub no_fourier: bool,
    /// Number of Fourier frequency rows.
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Number of residual blocks.
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Collocation points per iteration.
    #[arg(long)]
    pub collocation: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay_rate: Option<f64>,
    #[arg(long)]
    pub decay_every: Option<u64>,
    /// Add friction and bed slope to the momentum residual.
    #[arg(long)]
    pub extended_momentum: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub field: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to the checkpoint path with `.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct InterpolantArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DatumArg {
    Depth,
    Elevation,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory for report.csv, summary.json, timing.json, histogram.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Datum of the comparison; must match the field.
    #[arg(long, value_enum, default_value = "depth")]
    pub datum: DatumArg,
    /// Seed for the physics-residual collocation points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub collocation: usize,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory for benchmark.csv and benchmark.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Station index for the stage curves.
    #[arg(long, default_value_t = 10)]
    pub station: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_PARSE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
