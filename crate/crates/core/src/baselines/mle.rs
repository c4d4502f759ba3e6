//! Maximum-likelihood `(sigma^2, eta^2)` from the Kalman innovations.
//!
//! The search runs over `(ln sigma^2, ln eta^2)` so both stay positive.

use serde::Serialize;

use super::nelder_mead::{minimize, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::kalman::{log_likelihood, KalmanConfig};
use crate::operators::RegressionDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Simplex diameter in log-parameter space at which the search stops.
    pub tolerance: f64,
    /// Initial-state settings; the variances are overwritten during the search.
    pub kalman: KalmanConfig,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { max_iterations: 500, tolerance: 1e-8, kalman: KalmanConfig::new(1.0, 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleResult {
    pub sigma2: f64,
    pub eta2: f64,
    pub loglik: f64,
    pub initial_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best log-likelihood after each simplex iteration.
    pub trace: Vec<f64>,
}

/// Log-likelihood at `(sigma2, eta2)` with the initial-state settings of `base`.
pub fn loglik_at(dataset: &RegressionDataset, base: &KalmanConfig, sigma2: f64, eta2: f64) -> f64 {
    let cfg = KalmanConfig { sigma2, eta2, ..base.clone() };
    log_likelihood(dataset, &cfg).unwrap_or(f64::NEG_INFINITY)
}

pub fn mle_fit(dataset: &RegressionDataset, init: (f64, f64), options: &MleOptions) -> Result<MleResult> {
    let (s0, e0) = init;
    if !(s0 > 0.0 && e0 > 0.0 && s0.is_finite() && e0.is_finite()) {
        return Err(Error::invalid(format!("MLE initial point must be positive, got ({s0}, {e0})")));
    }
    let objective = |p: &[f64]| -loglik_at(dataset, &options.kalman, p[0].exp(), p[1].exp());
    let nm = NelderMeadOptions {
        max_iterations: options.max_iterations,
        diameter_tol: options.tolerance,
        initial_step: 0.5,
    };
    let start = [s0.ln(), e0.ln()];
    let initial_loglik = -objective(&start);
    let r = minimize(objective, &start, &nm);
    Ok(MleResult {
        sigma2: r.x[0].exp(),
        eta2: r.x[1].exp(),
        loglik: -r.fx,
        initial_loglik,
        iterations: r.iterations,
        converged: r.converged,
        trace: r.history.iter().map(|v| -v).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{simulate, SimulationConfig};

    #[test]
    fn recovers_variances_on_long_series() {
        let (ds, _) = simulate(&SimulationConfig::gaussian(2000, 2, 0.5, 2.0, 31)).unwrap();
        let r = mle_fit(&ds, (1.0, 1.0), &MleOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.loglik >= r.initial_loglik);
        assert!((r.sigma2 - 0.5).abs() < 0.25, "sigma2 {}", r.sigma2);
        assert!((r.eta2 - 2.0).abs() < 0.6, "eta2 {}", r.eta2);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn degenerate_start_recovers() {
        let (ds, _) = simulate(&SimulationConfig::gaussian(800, 1, 0.5, 2.0, 5)).unwrap();
        let from_truth = mle_fit(&ds, (0.5, 2.0), &MleOptions::default()).unwrap();
        let from_tiny = mle_fit(&ds, (1e-12, 2.0), &MleOptions::default()).unwrap();
        assert!(from_tiny.sigma2 > 1e-3, "sigma2 {}", from_tiny.sigma2);
        assert!((from_tiny.loglik - from_truth.loglik).abs() < 1e-4 * from_truth.loglik.abs());
    }

    #[test]
    fn rejects_nonpositive_start() {
        let (ds, _) = simulate(&SimulationConfig::gaussian(20, 1, 0.5, 2.0, 5)).unwrap();
        assert!(mle_fit(&ds, (0.0, 1.0), &MleOptions::default()).is_err());
    }
}
