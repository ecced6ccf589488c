//! `psr`: synthesize, plan, reconstruct, score and render photothermal
//! super-resolution experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod record;
mod scenario;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::units::{parse_extent, parse_length, parse_time};

/// Exit codes.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "psr", version, about = "Photothermal super-resolution from sequential laser-spot thermography")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset from a scenario file or a bundled scenario.
    Synth(SynthArgs),
    /// Lay out a triangular scan and check excitation homogeneity.
    Plan(PlanArgs),
    /// Reconstruct the defect map of a dataset.
    Reconstruct(ReconstructArgs),
    /// Conventional difference thermogram or pulse-phase maps.
    Baseline(BaselineArgs),
    /// Score a map against ground truth.
    Metrics(MetricsArgs),
    /// Write a map as a graymap (with scale sidecar) or CSV.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario TOML file.
    #[arg(required_unless_present_any = ["bundled", "list"], conflicts_with = "bundled")]
    scenario: Option<PathBuf>,
    /// Use a scenario shipped with the binary instead of a file.
    #[arg(long)]
    bundled: Option<String>,
    /// List the bundled scenarios and exit.
    #[arg(long)]
    list: bool,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset directory to create.
    #[arg(long, required_unless_present = "list")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// ROI as WIDTHxHEIGHT with units, e.g. 40.1x3.86mm.
    #[arg(long, value_parser = parse_extent)]
    roi: (f64, f64),
    /// Lattice side r_d, e.g. 0.743mm.
    #[arg(long, value_parser = parse_length)]
    rd: f64,
    /// Laser spot diameter.
    #[arg(long, value_parser = parse_length, default_value = "0.6mm")]
    spot: f64,
    /// Evaluation time setting the thermal footprint width.
    #[arg(long, value_parser = parse_time, default_value = "500ms")]
    t_eval: f64,
    /// Also write plan.json and run.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Sms,
    Fft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    PaperSms,
    PaperFft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SmsOperatorArg {
    Flattened,
    Strict2d,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    /// Dataset directory.
    dataset: PathBuf,
    /// Result directory (must differ from the dataset).
    #[arg(long)]
    out: PathBuf,
    /// Solver; defaults to the preset's, else sms.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Published parameter set (weights and evaluation time). Without one,
    /// weights suited to the bundled scenarios and the dataset's evaluation
    /// time are used.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    lambda21: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// ADMM penalty, or `auto` for the L-curve over decade-spaced candidates.
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    /// Time slice to reconstruct, e.g. 500ms.
    #[arg(long, value_parser = parse_time)]
    t_eval: Option<f64>,
    /// Seed of the random ADMM initialisation.
    #[arg(long)]
    seed: Option<u64>,
    /// Store the per-measurement maps as well.
    #[arg(long)]
    per_measurement: bool,
    #[arg(long, value_enum)]
    sms_operator: Option<SmsOperatorArg>,
    /// Skip the cosine edge taper before the spectral solve.
    #[arg(long)]
    no_taper: bool,
    /// Stop once the residuals drop below 1e-8 relative.
    #[arg(long)]
    early_stop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineMethod {
    Diff,
    Ppt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WindowArg {
    None,
    HalfCosine,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    dataset: PathBuf,
    #[arg(long, value_enum)]
    method: BaselineMethod,
    /// PPT frequency in Hz.
    #[arg(long)]
    freq: Option<f64>,
    /// Slice for the difference thermogram (default: the dataset's).
    #[arg(long, value_parser = parse_time)]
    t_eval: Option<f64>,
    /// Reference slice for the difference thermogram (default: first frame
    /// of a series; none for single-slice datasets, whose frames are already
    /// temperature increases).
    #[arg(long, value_parser = parse_time)]
    t_ref: Option<f64>,
    #[arg(long, value_enum, default_value = "none")]
    window: WindowArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Result directory or CSV map.
    #[arg(long)]
    recon: PathBuf,
    /// truth.json, or a dataset directory holding one.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = psr_core::evaluation::DEFAULT_VALLEY_THRESHOLD)]
    valley_threshold: f64,
    #[arg(long, default_value_t = psr_core::evaluation::DEFAULT_ACTIVATION_FRAC)]
    activation_frac: f64,
    /// Also write metrics.json and run.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Pgm,
    Csv,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Result directory or CSV map.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "pgm")]
    format: FormatArg,
    /// Render the stored per-measurement maps too.
    #[arg(long)]
    per_measurement: bool,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_USAGE, error: anyhow::anyhow!("{msg}") }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: EXIT_DATA, error: error.into() }
    }
}

impl From<psr_core::Error> for Failure {
    fn from(e: psr_core::Error) -> Self {
        use psr_core::Error as E;
        let code = match &e {
            E::Domain(_) | E::Parameter(_) | E::RoiTooSmall(_) => EXIT_USAGE,
            E::Divergence { .. } | E::Numerical(_) => EXIT_NUMERICAL,
            E::Shape { .. }
            | E::CorruptDataset { .. }
            | E::Version { .. }
            | E::Locked(_)
            | E::MissingSlice(_)
            | E::Io(_)
            | E::Json(_) => EXIT_DATA,
        };
        Failure { code, error: e.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: EXIT_DATA, error }
    }
}

pub type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let threads = cli.threads;
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a, threads),
        Command::Plan(a) => commands::plan(a, threads),
        Command::Reconstruct(a) => commands::reconstruct(a, threads),
        Command::Baseline(a) => commands::baseline(a, threads),
        Command::Metrics(a) => commands::metrics(a, threads),
        Command::Render(a) => commands::render(a, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
