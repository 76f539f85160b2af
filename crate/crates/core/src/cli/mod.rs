//! Command-line front end: `calibrate`, `predict`, `decay`, `regress` and
//! `synth`. Every command writes its outputs plus `manifest.json` into
//! `--out-dir`.
//!
//! Exit codes: 0 success, 1 other failure, 2 ingest error, 3 degenerate data,
//! 4 shape or kind mismatch, 5 regression failure.

mod commands;
mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::ingest::{IngestError, LoadOptions, ScenarioPaths};
use crate::models::{ModelKind, Weighting};

pub use commands::{CalibrationOutput, RestartSummary};
pub use output::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "tradewinds", version, about = "Huff-family market-share models with PSO calibration")]
pub struct Cli {
    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit (alpha, beta) by particle swarm and/or grid search.
    Calibrate(CalibrateArgs),
    /// Evaluate a model at given exponents and export shares.
    Predict(PredictArgs),
    /// Distance-decay summary of observed visits.
    Decay(DecayArgs),
    /// Multiple regression of pairwise visit counts.
    Regress(RegressArgs),
    /// Write a synthetic dataset with known parameters.
    Synth(SynthArgs),
}

/// Input file locations shared by the data-reading commands.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Directory holding stores.csv, hourly.csv, visits.csv and neighborhoods.csv.
    #[arg(long, default_value = ".")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub stores: Option<PathBuf>,
    #[arg(long)]
    pub hourly: Option<PathBuf>,
    #[arg(long)]
    pub visits: Option<PathBuf>,
    #[arg(long)]
    pub neighborhoods: Option<PathBuf>,
    /// Drop visit rows below this count (5 when given without a value).
    #[arg(long, num_args = 0..=1, default_missing_value = "5")]
    pub min_visit_threshold: Option<f64>,
    /// Skip rows with unknown ids or malformed values instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

impl InputArgs {
    pub fn paths(&self) -> ScenarioPaths {
        let base = ScenarioPaths::in_dir(&self.data_dir);
        ScenarioPaths {
            stores: self.stores.clone().unwrap_or(base.stores),
            hourly: self.hourly.clone().unwrap_or(base.hourly),
            visits: self.visits.clone().unwrap_or(base.visits),
            neighborhoods: self.neighborhoods.clone().unwrap_or(base.neighborhoods),
        }
    }

    pub fn options(&self) -> LoadOptions {
        LoadOptions {
            min_visit_threshold: self.min_visit_threshold,
            lenient: self.lenient,
            ..LoadOptions::from_env()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Huff,
    Mhuff,
    Thuff,
    Ahuff,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Huff => ModelKind::Huff,
            ModelArg::Mhuff => ModelKind::MHuff,
            ModelArg::Thuff => ModelKind::THuff,
            ModelArg::Ahuff => ModelKind::AHuff,
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = ModelArg::Thuff)]
    pub model: ModelArg,
    /// TOML file with swarm settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Also write grid.csv.
    #[arg(long)]
    pub grid: bool,
    /// Evaluate the grid only; skip the swarm.
    #[arg(long)]
    pub grid_only: bool,
    /// Grid values used for both exponents.
    #[arg(long, value_delimiter = ',', default_values_t = crate::calibrate::DEFAULT_GRID)]
    pub grid_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightArg {
    Population,
    Visits,
}

impl From<WeightArg> for Weighting {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Population => Weighting::Population,
            WeightArg::Visits => Weighting::Visits,
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = ModelArg::Huff)]
    pub model: ModelArg,
    #[arg(long, requires = "beta", conflicts_with = "params")]
    pub alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    pub beta: Option<f64>,
    /// result.json written by `calibrate`.
    #[arg(long, required_unless_present = "alpha")]
    pub params: Option<PathBuf>,
    /// Export a single hour of a time-aware model.
    #[arg(long)]
    pub hour: Option<usize>,
    /// Also write predicted minus observed shares.
    #[arg(long)]
    pub diff: bool,
    /// Number of map classes in the GeoJSON output.
    #[arg(long, default_value_t = 7)]
    pub classes: usize,
    #[arg(long, value_enum, default_value_t = WeightArg::Population)]
    pub weights: WeightArg,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = crate::stats::DEFAULT_BINS)]
    pub bins: usize,
    /// Smallest bin center used by the log-log fit, in km.
    #[arg(long, default_value_t = crate::stats::DEFAULT_FIT_MIN_KM)]
    pub fit_min_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    City,
    Brand,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Fit one model per group and write r2_by_group.csv.
    #[arg(long, value_enum)]
    pub group_by: Option<GroupArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Uniform,
    Bimodal,
    PointMass,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    None,
    Poisson,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of stores.
    #[arg(long, default_value_t = 5)]
    pub stores: usize,
    /// Number of neighborhoods.
    #[arg(long, default_value_t = 200)]
    pub neighborhoods: usize,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.2)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = ProfileArg::Dirichlet)]
    pub profile: ProfileArg,
    /// Dirichlet concentration.
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::None)]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 1000.0)]
    pub visits_per_neighborhood: f64,
}

/// A failed command: message for stderr plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoObservations
            | Error::NonCalibratable
            | Error::ZeroVariance
            | Error::AllZeroWeights { .. }
            | Error::EmptyDistribution
            | Error::DegenerateRange(_) => 3,
            Error::KindMismatch { .. } | Error::ShapeMismatch(_) => 4,
            Error::RankDeficient { .. } | Error::InsufficientData { .. } => 5,
            Error::InvalidScenario(_) | Error::InvalidConfig(_) => 1,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::new(2, e.to_string())
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let echo: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match crate::par::with_threads(cli.threads, || commands::dispatch(&cli, echo)) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
