//! The `mixedflow` command line.
//!
//! Every subcommand reads files, writes its artifacts plus a `manifest.json`
//! into `--out`, and maps failures to exit codes: 1 for usage errors, 2 for
//! bad or unusable data, 3 for numeric failures such as a collision in a
//! simulated platoon.

mod manifest;
mod stages;
mod synthetic;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::trajectory_io::Units;

pub use manifest::{RunManifest, MANIFEST_FILE};
pub use stages::{
    CalibratedModel, ErrorSummary, ModelStability, SimulationRequest, SimulationSummary, StabilityReport,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(
    crate::trajectory_io::TrajectoryError,
    crate::smoothing::SmoothingError,
    crate::calibration::CalibrationError,
    crate::stability::StabilityError,
    crate::carfollowing::CarFollowingError,
    serde_json::Error
);

#[derive(Debug, Parser)]
#[command(
    name = "mixedflow",
    version,
    about = "Calibrate car-following models and design CAV gains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse an NGSIM-style CSV into canonical per-vehicle trajectories
    Ingest(IngestArgs),
    /// Recompute kinematics and apply the sEMA filter
    Smooth(SmoothArgs),
    /// Match followers with their leaders
    Pair(PairArgs),
    /// Fit one FVDM per pair with the genetic algorithm
    Calibrate(CalibrateArgs),
    /// Linearize calibrated models and report critical frequencies
    Stability(StabilityArgs),
    /// Grid-search CAV gains
    OptimizeGains(OptimizeArgs),
    /// Simulate a platoon described by a JSON spec
    Simulate(SimulateArgs),
    /// Run every stage in order
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "meters")]
    pub units: Units,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SmoothingFlags {
    /// Position smoothing width, s
    #[arg(long, default_value_t = 0.5)]
    pub tx: f64,
    /// Velocity smoothing width, s
    #[arg(long, default_value_t = 1.0)]
    pub tv: f64,
    /// Acceleration smoothing width, s
    #[arg(long, default_value_t = 4.0)]
    pub ta: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SmoothArgs {
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    pub smoothing: SmoothingFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PairArgs {
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Only pair within this lane
    #[arg(long)]
    pub lane: Option<i64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GaFlags {
    /// Pin the reaction delay to zero
    #[arg(long)]
    pub pin_tau: bool,
    /// Parameter box as JSON, e.g. '{"V0":[1,40]}'; missing entries keep defaults
    #[arg(long)]
    pub bounds: Option<String>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub max_generations: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    /// Smoothed canonical trajectory CSV
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    /// Pair index JSON written by `pair`
    #[arg(long)]
    #[serde(skip)]
    pub pairs: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub ga: GaFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OmegaFlags {
    #[arg(long, default_value_t = 1e-3)]
    pub omega_min: f64,
    #[arg(long, default_value_t = 1e2)]
    pub omega_max: f64,
    #[arg(long, default_value_t = 4000)]
    pub omega_points: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StabilityArgs {
    /// Model inventory JSON written by `calibrate`
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// '{"v_star":..,"lambda2":..,"lambda3":..}'; without lambda3 each driver
    /// is linearized at its own equilibrium headway
    #[arg(long)]
    pub equilibrium: String,
    #[command(flatten)]
    pub omega: OmegaFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GainFlags {
    /// Lower headway bound, m
    #[arg(long)]
    pub headway_min: f64,
    /// Upper headway bound, m
    #[arg(long)]
    pub headway_max: f64,
    /// Disturbance amplitude, m
    #[arg(long)]
    pub beta: f64,
    /// Gain grid as JSON: each of k1, k2, k3 a list or {start, stop, step}
    #[arg(long)]
    pub gain_grid: Option<String>,
    /// Override the headway margin used in eta
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    /// Stability report JSON written by `stability`
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    pub gains: GainFlags,
    #[command(flatten)]
    pub omega: OmegaFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Simulation request JSON
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    /// NGSIM-style CSV, or `synthetic` for a generated scenario
    #[arg(long)]
    pub input: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub units: Option<Units>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub lane: Option<i64>,
    #[command(flatten)]
    pub smoothing: SmoothingFlags,
    #[command(flatten)]
    pub ga: GaFlags,
    /// Required unless the input is synthetic
    #[arg(long)]
    pub equilibrium: Option<String>,
    #[command(flatten)]
    pub omega: OmegaFlags,
    #[arg(long)]
    pub headway_min: Option<f64>,
    #[arg(long)]
    pub headway_max: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gain_grid: Option<String>,
    #[arg(long)]
    pub delta: Option<f64>,
}

/// Run the command line and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => stages::ingest(a).map(drop),
        Command::Smooth(a) => stages::smooth(a).map(drop),
        Command::Pair(a) => stages::pair(a).map(drop),
        Command::Calibrate(a) => stages::calibrate(a).map(drop),
        Command::Stability(a) => stages::stability(a).map(drop),
        Command::OptimizeGains(a) => stages::optimize(a).map(drop),
        Command::Simulate(a) => stages::simulate(a).map(drop),
        Command::Pipeline(a) => stages::pipeline(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

fn parse_flag_json<T: serde::de::DeserializeOwned>(flag: &str, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}
