use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde_json::json;

use super::{read_input, usage, CliError, RunManifest};
use crate::error::Error;
use crate::estimator::{estimate, gap_diagnostic, StveConfig};
use crate::operators::filter_rows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Dataset CSV, or `-` for stdin.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub min_row_norm: f64,
    #[arg(long = "gap-warn", default_value_t = 0.05)]
    pub gap_warn: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
}

impl EstimateArgs {
    pub fn config(&self) -> Result<StveConfig, CliError> {
        let cfg = StveConfig {
            alpha: self.alpha,
            min_row_norm: self.min_row_norm,
            gap_warn_threshold: self.gap_warn,
            ..StveConfig::default()
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

pub(super) fn run(args: &EstimateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = args.config()?;
    let (dataset, digest) = read_input(&args.input)?;
    let est = estimate(&dataset, &cfg)?;
    let (reduced, _) = filter_rows(&dataset, cfg.min_row_norm)?;
    let diag = gap_diagnostic(&reduced, &est.functionals, cfg.gap_warn_threshold);
    for w in &est.warnings {
        writeln!(err, "warning: {w}")?;
    }

    let mut manifest = RunManifest::new("estimate", serde_json::to_value(cfg).map_err(json_err)?, None, Some(digest));
    manifest.finish(start.elapsed());
    match args.format {
        OutputFormat::Json => {
            let doc = json!({
                "estimate": est,
                "gap": diag,
                "manifest": manifest,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(json_err)?)?;
        }
        OutputFormat::Csv => {
            writeln!(out, "# {}", manifest.comment())?;
            writeln!(out, "# manifest={}", serde_json::to_string(&manifest).map_err(json_err)?)?;
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record([
                "sigma2",
                "eta2",
                "sigma2_raw",
                "eta2_raw",
                "gap_ratio",
                "p",
                "effective_t",
                "gap_lower_bound",
                "warnings",
            ])
            .map_err(Error::from)?;
            let warnings: Vec<String> = est.warnings.iter().map(|w| w.to_string()).collect();
            w.write_record([
                est.sigma2.to_string(),
                est.eta2.to_string(),
                est.sigma2_raw.to_string(),
                est.eta2_raw.to_string(),
                est.functionals.gap_ratio.to_string(),
                est.functionals.p.to_string(),
                est.effective_t.to_string(),
                est.gap_lower_bound.to_string(),
                warnings.join("; "),
            ])
            .map_err(Error::from)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub(super) fn json_err(e: serde_json::Error) -> CliError {
    CliError::Library(Error::Io(std::io::Error::other(e)))
}
