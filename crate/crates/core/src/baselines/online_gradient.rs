//! Online gradient forecaster `x_t = x_{t-1} + a u_t (Y_t - <x_{t-1}, u_t>)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::RegressionDataset;

/// States larger than this are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnlineGradientConfig {
    pub learning_rate: f64,
    pub x0: Option<Vec<f64>>,
}

impl OnlineGradientConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, x0: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineGradientRun {
    pub states: DMatrix<f64>,
    pub predictions: Vec<f64>,
    /// Sum of squared prediction errors over observed rows.
    pub sse: f64,
}

/// Runs the update with a per-step rate `gains[t]`; missing rows are skipped.
pub fn online_gradient_run_with_gains(
    dataset: &RegressionDataset,
    x0: Option<&[f64]>,
    gains: &[f64],
) -> Result<OnlineGradientRun> {
    let (t_max, n) = (dataset.horizon(), dataset.dim());
    if gains.len() != t_max {
        return Err(Error::DimensionMismatch { expected: t_max, found: gains.len() });
    }
    if gains.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid("learning rates must be finite"));
    }
    let mut x = match x0 {
        Some(v) if v.len() != n => return Err(Error::DimensionMismatch { expected: n, found: v.len() }),
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let mut states = DMatrix::zeros(t_max, n);
    let mut predictions = Vec::with_capacity(t_max);
    let mut sse = 0.0;
    for (t, &gain) in gains.iter().enumerate() {
        let u = dataset.u().row(t);
        let prediction: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
        predictions.push(prediction);
        if dataset.observed()[t] {
            let err = dataset.y()[t] - prediction;
            sse += err * err;
            let step = gain * err;
            x.iter_mut().zip(u.iter()).for_each(|(xi, ui)| *xi += step * ui);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm <= DIVERGENCE_NORM) {
                return Err(Error::Divergence(format!(
                    "online gradient state norm {norm:e} at time {}",
                    dataset.times()[t]
                )));
            }
        }
        states.row_mut(t).iter_mut().zip(&x).for_each(|(s, v)| *s = *v);
    }
    Ok(OnlineGradientRun { states, predictions, sse })
}

pub fn online_gradient_run(dataset: &RegressionDataset, config: &OnlineGradientConfig) -> Result<OnlineGradientRun> {
    let gains = vec![config.learning_rate; dataset.horizon()];
    online_gradient_run_with_gains(dataset, config.x0.as_deref(), &gains)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningOptions {
    pub max_rate: f64,
    /// Number of equal sub-intervals, each refined by golden-section search.
    pub seeds: usize,
    pub tolerance: f64,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self { max_rate: 2.0, seeds: 8, tolerance: 1e-6 }
    }
}

fn sse_at(dataset: &RegressionDataset, rate: f64) -> f64 {
    online_gradient_run(dataset, &OnlineGradientConfig::new(rate))
        .map(|r| r.sse)
        .unwrap_or(f64::INFINITY)
}

fn golden_section(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Learning rate in `[0, max_rate]` minimizing the forecast SSE on `dataset`.
pub fn tune_learning_rate(dataset: &RegressionDataset, options: &TuningOptions) -> Result<f64> {
    if !(options.max_rate > 0.0) || options.seeds == 0 || !(options.tolerance > 0.0) {
        return Err(Error::invalid("tuning needs max_rate > 0, seeds >= 1 and tolerance > 0"));
    }
    let f = |a: f64| sse_at(dataset, a);
    let width = options.max_rate / options.seeds as f64;
    let mut best = (0.0, f(0.0));
    let end = (options.max_rate, f(options.max_rate));
    if end.1 < best.1 {
        best = end;
    }
    for k in 0..options.seeds {
        let lo = k as f64 * width;
        let candidate = golden_section(&f, lo, lo + width, options.tolerance);
        if candidate.1 < best.1 {
            best = candidate;
        }
    }
    Ok(best.0)
}
