use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use super::{read_input, usage, CliError, RunManifest};
use crate::baselines::{
    online_gradient_run, predict_all, stationary_regression, tune_learning_rate, OnlineGradientConfig,
    TuningOptions,
};
use crate::dataio::{split_point, NormalizationParams};
use crate::error::Error;
use crate::estimator::{estimate, StveConfig};
use crate::kalman::{filter, KalmanConfig};

/// Floor applied to an estimated observation variance of zero, in
/// normalized units, so the filter stays well defined.
const MIN_FILTER_ETA2: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Kalman,
    /// Online gradient descent.
    Og,
    Stationary,
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Process variance in normalized units (Kalman only).
    #[arg(long, conflicts_with = "auto")]
    pub sigma2: Option<f64>,
    /// Observation variance in normalized units (Kalman only).
    #[arg(long, conflicts_with = "auto")]
    pub eta2: Option<f64>,
    /// Estimate the variances from the training split.
    #[arg(long)]
    pub auto: bool,
    #[arg(long, value_enum, default_value_t = Baseline::Kalman)]
    pub baseline: Baseline,
    /// Fixed rate for `og`; tuned on the training split when omitted.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// Width of the centered moving average of squared errors.
    #[arg(long, default_value_t = 50)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Centered moving average over a window of `window` positions, clipped at
/// the ends and skipping NaN entries.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let len = values.len();
    let w = window.max(1);
    let left = (w - 1) / 2;
    let right = w / 2;
    // Prefix sums of finite values and their counts.
    let mut sum = vec![0.0; len + 1];
    let mut count = vec![0usize; len + 1];
    for (i, v) in values.iter().enumerate() {
        let ok = v.is_finite();
        sum[i + 1] = sum[i] + if ok { *v } else { 0.0 };
        count[i + 1] = count[i] + ok as usize;
    }
    (0..len)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(len);
            let k = count[hi] - count[lo];
            if k == 0 {
                f64::NAN
            } else {
                (sum[hi] - sum[lo]) / k as f64
            }
        })
        .collect()
}

fn mean_finite(values: &[f64]) -> (f64, usize) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let k = finite.len();
    let mean = if k == 0 { f64::NAN } else { finite.iter().sum::<f64>() / k as f64 };
    (mean, k)
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

pub(super) fn run(args: &FilterArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let start = Instant::now();
    if args.window == 0 {
        return Err(usage("--window must be positive"));
    }
    if args.baseline != Baseline::Kalman && (args.auto || args.sigma2.is_some() || args.eta2.is_some()) {
        return Err(usage("--sigma2, --eta2 and --auto apply to the kalman baseline only"));
    }
    if args.baseline != Baseline::Og && args.learning_rate.is_some() {
        return Err(usage("--learning-rate applies to the og baseline only"));
    }
    if args.baseline == Baseline::Kalman && !args.auto && (args.sigma2.is_none() || args.eta2.is_none()) {
        return Err(usage("the kalman baseline needs --sigma2 and --eta2, or --auto"));
    }
    let (dataset, digest) = read_input(&args.input)?;
    let k = split_point(dataset.horizon(), args.train_fraction).map_err(|e| usage(e.to_string()))?;
    let params = NormalizationParams::fit(&dataset.slice(0..k)?)?;
    let full = params.normalize(&dataset)?;
    let train = full.slice(0..k)?;

    let mut resolved = json!({
        "baseline": args.baseline,
        "train_fraction": args.train_fraction,
        "train_rows": k,
        "window": args.window,
        "normalization": params,
    });
    let predictions = match args.baseline {
        Baseline::Kalman => {
            let (sigma2, eta2) = if args.auto {
                let est = estimate(&train, &StveConfig::default())?;
                for w in &est.warnings {
                    writeln!(err, "warning: {w}")?;
                }
                (est.sigma2, est.eta2.max(MIN_FILTER_ETA2))
            } else {
                (args.sigma2.unwrap_or_default(), args.eta2.unwrap_or_default())
            };
            let cfg = KalmanConfig::new(sigma2, eta2);
            cfg.validate(full.dim()).map_err(|e| usage(e.to_string()))?;
            resolved["sigma2"] = json!(sigma2);
            resolved["eta2"] = json!(eta2);
            resolved["auto"] = json!(args.auto);
            filter(&full, &cfg)?.predictions
        }
        Baseline::Og => {
            let rate = match args.learning_rate {
                Some(r) if r.is_finite() && r >= 0.0 => r,
                Some(r) => return Err(usage(format!("--learning-rate must be finite and >= 0, got {r}"))),
                None => tune_learning_rate(&train, &TuningOptions::default())?,
            };
            resolved["learning_rate"] = json!(rate);
            online_gradient_run(&full, &OnlineGradientConfig::new(rate))?.predictions
        }
        Baseline::Stationary => {
            let coef = stationary_regression(&train)?;
            resolved["coefficients"] = json!(coef.as_slice());
            predict_all(&full, &coef)
        }
    };

    let y_hat: Vec<f64> = predictions.iter().map(|&p| params.denormalize_y(p)).collect();
    let sq_err: Vec<f64> = (0..dataset.horizon())
        .map(|t| if dataset.observed()[t] { (dataset.y()[t] - y_hat[t]).powi(2) } else { f64::NAN })
        .collect();
    let smoothed = moving_average(&sq_err, args.window);
    let (train_mse, train_count) = mean_finite(&sq_err[..k]);
    let (test_mse, test_count) = mean_finite(&sq_err[k..]);

    let mut manifest = RunManifest::new("filter", resolved, None, Some(digest));
    let file = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    let mut file = file;
    writeln!(file, "# {}", manifest.comment())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["t", "y", "y_hat", "sq_err", "smoothed_sq_err", "split"]).map_err(Error::from)?;
    for t in 0..dataset.horizon() {
        let y = if dataset.observed()[t] { dataset.y()[t] } else { f64::NAN };
        w.write_record([
            dataset.times()[t].to_string(),
            cell(y),
            cell(y_hat[t]),
            cell(sq_err[t]),
            cell(smoothed[t]),
            (if t < k { "train" } else { "test" }).to_string(),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    drop(w);
    manifest.finish(start.elapsed());
    manifest.write_beside(&args.out)?;

    let summary = json!({
        "baseline": args.baseline,
        "train": { "mse": train_mse, "count": train_count },
        "test": { "mse": test_mse, "count": test_count },
        "config_hash": manifest.config_hash(),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&summary).map_err(super::estimate::json_err)?)?;
    Ok(())
}
