use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde_json::json;

use super::{read_input, usage, CliError, RunManifest};
use crate::error::Error;
use crate::operators::{filter_rows, gram_matrix};
use crate::spectral::{eigen_projected, functionals_from, truncation_index, EigenMethod};

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Truncation fraction used for the reported gap ratio.
    #[arg(long, default_value_t = 0.25)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub min_row_norm: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub(super) fn run(args: &SpectrumArgs, out: &mut dyn Write, _err: &mut dyn Write) -> Result<(), CliError> {
    let start = Instant::now();
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    if !(args.min_row_norm >= 0.0) {
        return Err(usage("--min-row-norm must be >= 0"));
    }
    let (dataset, digest) = read_input(&args.input)?;
    let (reduced, report) = filter_rows(&dataset, args.min_row_norm)?;
    let m = reduced.horizon();
    let gram = gram_matrix(&reduced)?;
    let spec = eigen_projected(&gram, &vec![0.0; m], EigenMethod::Auto)?;
    let p = truncation_index(args.alpha, m);
    let f = functionals_from(&spec.gamma_sq, p)?;
    let mean = f.hs_r_sq / m as f64;

    let resolved = json!({
        "alpha": args.alpha,
        "min_row_norm": args.min_row_norm,
        "effective_t": m,
        "dropped_rows": report.dropped(),
    });
    let mut manifest = RunManifest::new("spectrum", resolved, None, Some(digest));
    let mut file = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(file, "# {}", manifest.comment())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["i", "gamma_sq", "chi_sq", "prefix_avg", "mean_hs"]).map_err(Error::from)?;
    // Largest chi^2 (smallest gamma^2) first.
    let mut prefix = 0.0;
    for (i, &g) in spec.gamma_sq.iter().rev().enumerate() {
        let chi = 1.0 / g;
        prefix += chi;
        w.write_record([
            (i + 1).to_string(),
            g.to_string(),
            chi.to_string(),
            (prefix / (i + 1) as f64).to_string(),
            mean.to_string(),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    drop(w);
    manifest.finish(start.elapsed());
    manifest.write_beside(&args.out)?;

    let summary = json!({
        "effective_t": m,
        "p": p,
        "gap_ratio": f.gap_ratio,
        "hs_r_sq": f.hs_r_sq,
        "hs_rp_sq": f.hs_rp_sq,
        "config_hash": manifest.config_hash(),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&summary).map_err(super::estimate::json_err)?)?;
    Ok(())
}
