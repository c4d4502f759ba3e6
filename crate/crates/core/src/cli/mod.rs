//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 numerical or model
//! failure, 3 invalid arguments.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;

mod benchmark;
mod estimate;
mod filter;
mod manifest;
mod simulate;
mod spectrum;

pub use benchmark::{BenchmarkArgs, BenchmarkFile};
pub use estimate::{EstimateArgs, OutputFormat};
pub use filter::{moving_average, Baseline, FilterArgs};
pub use manifest::{config_hash, RunManifest};
pub use simulate::{parse_missing, SimulateArgs, UChoice};
pub use spectrum::SpectrumArgs;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stve", version, about = "Variance estimation for dynamic linear regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate (sigma^2, eta^2) from a dataset file.
    Estimate(EstimateArgs),
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Monte Carlo error-versus-horizon table.
    Benchmark(BenchmarkArgs),
    /// One-step-ahead forecasts with a Kalman filter or a baseline.
    Filter(FilterArgs),
    /// Inverse singular values of the system operator.
    Spectrum(SpectrumArgs),
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flag values or flag combinations.
    Usage(String),
    /// Input could not be read or parsed.
    Input(Error),
    Library(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_IO,
            CliError::Library(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Library(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "invalid arguments: {m}"),
            CliError::Input(e) | CliError::Library(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Library(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Library(Error::Io(e))
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Reads an input file (or stdin for `-`), returning its bytes and digest.
pub(crate) fn read_input(path: &PathBuf) -> Result<(crate::RegressionDataset, String), CliError> {
    let bytes = if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::Read::read_to_end(&mut std::io::stdin(), &mut buf).map_err(|e| CliError::Input(e.into()))?;
        buf
    } else {
        std::fs::read(path).map_err(|e| {
            CliError::Input(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
        })?
    };
    let digest = manifest::sha256_hex(&bytes);
    let ds = crate::dataio::read_csv_from(bytes.as_slice(), &path.display().to_string()).map_err(CliError::Input)?;
    Ok((ds, digest))
}

/// Parses `args` and runs the command, writing results to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(&cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Estimate(a) => estimate::run(a, out, err),
        Command::Simulate(a) => simulate::run(a, out, err),
        Command::Benchmark(a) => benchmark::run(a, out, err),
        Command::Filter(a) => filter::run(a, out, err),
        Command::Spectrum(a) => spectrum::run(a, out, err),
    }
}

/// Entry point for the binary.
pub fn main_from_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = run(std::env::args_os(), &mut out, &mut err);
    let _ = out.flush();
    code
}
