use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use nalgebra::DMatrix;
use serde_json::json;

use super::{usage, CliError, RunManifest};
use crate::dataio::write_csv;
use crate::error::Error;
use crate::simulator::{simulate, NoiseFamily, NoiseSpec, SimulationConfig, UProcess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UChoice {
    /// Independent standard normal coordinates.
    Gaussian,
    /// `u_t = (1, ..., 1)`.
    Constant,
    /// Read from `--u-file`.
    File,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Horizon; taken from the file when `--u file` and omitted.
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    /// Dimension; taken from the file when `--u file` and omitted.
    #[arg(long = "n")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub sigma2: f64,
    #[arg(long)]
    pub eta2: f64,
    #[arg(long, default_value_t = NoiseFamily::Gaussian)]
    pub noise: NoiseFamily,
    #[arg(long = "u", value_enum, default_value_t = UChoice::Gaussian)]
    pub u: UChoice,
    /// CSV of observation vectors (header row, one numeric column per coordinate).
    #[arg(long)]
    pub u_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Withheld observations, e.g. `10:20,35` (1-based, inclusive).
    #[arg(long)]
    pub missing: Option<String>,
    #[arg(long)]
    pub output: PathBuf,
}

/// Parses `a:b` ranges and single indices separated by commas.
pub fn parse_missing(spec: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("bad index '{s}' in missing spec"));
        match part.split_once(':') {
            Some((a, b)) => {
                let (a, b) = (parse(a)?, parse(b)?);
                if a == 0 || b < a {
                    return Err(format!("bad range '{part}' in missing spec"));
                }
                out.extend(a..=b);
            }
            None => {
                let a = parse(part)?;
                if a == 0 {
                    return Err("missing indices are 1-based".into());
                }
                out.push(a);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn read_u_file(path: &PathBuf) -> Result<DMatrix<f64>, CliError> {
    let source = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(e.into()))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Input(e.into()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(CliError::Input(Error::Parse { path: source, line, message: "ragged row".into() }));
        }
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Input(Error::Parse { path: source.clone(), line, message: format!("invalid value '{cell}'") })
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| {
        CliError::Input(Error::Parse { path: source.clone(), line: 1, message: "no rows".into() })
    })?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

fn build_config(args: &SimulateArgs) -> Result<SimulationConfig, CliError> {
    let noise = |v: f64| NoiseSpec::new(args.noise, v).map_err(|e| usage(e.to_string()));
    let process_noise = noise(args.sigma2)?;
    let observation_noise = noise(args.eta2)?;
    if args.u_file.is_some() && args.u != UChoice::File {
        return Err(usage("--u-file requires --u file"));
    }
    let (horizon, dim, u_process) = match args.u {
        UChoice::File => {
            let path = args.u_file.as_ref().ok_or_else(|| usage("--u file requires --u-file"))?;
            let m = read_u_file(path)?;
            let horizon = args.horizon.unwrap_or(m.nrows());
            let dim = args.dim.unwrap_or(m.ncols());
            if horizon != m.nrows() || dim != m.ncols() {
                return Err(usage(format!(
                    "--u-file is {}x{}, but --T {horizon} --n {dim} were given",
                    m.nrows(),
                    m.ncols()
                )));
            }
            (horizon, dim, UProcess::Given(m))
        }
        choice => {
            let horizon = args.horizon.ok_or_else(|| usage("--T is required"))?;
            let dim = args.dim.ok_or_else(|| usage("--n is required"))?;
            let u = if choice == UChoice::Gaussian { UProcess::GaussianIid } else { UProcess::Constant(vec![1.0; dim]) };
            (horizon, dim, u)
        }
    };
    let missing = match &args.missing {
        Some(spec) => parse_missing(spec).map_err(usage)?,
        None => Vec::new(),
    };
    let cfg = SimulationConfig {
        horizon,
        dim,
        process_noise,
        observation_noise,
        u_process,
        seed: args.seed,
        missing,
        initial_state: None,
        regime_shift: None,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub(super) fn run(args: &SimulateArgs, out: &mut dyn Write, _err: &mut dyn Write) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = build_config(args)?;
    let u_digest = match &args.u_file {
        Some(p) => Some(super::manifest::sha256_hex(&std::fs::read(p).map_err(|e| CliError::Input(e.into()))?)),
        None => None,
    };
    let (dataset, _hidden) = simulate(&cfg)?;
    let resolved = json!({
        "T": cfg.horizon,
        "n": cfg.dim,
        "sigma2": cfg.sigma2(),
        "eta2": cfg.eta2(),
        "noise": cfg.process_noise.family,
        "kappa_process": cfg.process_noise.kappa(),
        "kappa_observation": cfg.observation_noise.kappa(),
        "u": format!("{:?}", args.u).to_lowercase(),
        "missing": cfg.missing,
    });
    let mut manifest = RunManifest::new("simulate", resolved, Some(cfg.seed), u_digest);
    let file = std::fs::File::create(&args.output)?;
    write_csv(&dataset, std::io::BufWriter::new(file), Some(&manifest.comment()))?;
    manifest.finish(start.elapsed());
    manifest.write_beside(&args.output)?;
    writeln!(out, "wrote {} rows to {}", dataset.horizon(), args.output.display())?;
    Ok(())
}
