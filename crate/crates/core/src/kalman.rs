//! Kalman filter for the random-walk regression model.
//!
//! With prior `(x_{t-1}, C_{t-1})` and `P = C_{t-1} + sigma^2 I`, one step is
//!
//! ```text
//! s_t = <P u_t, u_t> + eta^2
//! x_t = x_{t-1} + (P u_t / s_t) (Y_t - <x_{t-1}, u_t>)
//! ```
//!
//! The gain `P u_t / s_t` equals `(C_t / eta^2) u_t` for the posterior
//! covariance `C_t`. The default [`CovarianceForm::Exact`] uses the rank-one
//! posterior `C_t = P - (P u)(P u)^T / s_t`; [`CovarianceForm::Scaled`] uses
//! `C_t = (eta^2 / s_t) P`, which coincides with it when `n = 1`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::RegressionDataset;

pub const DEFAULT_C0_SCALE: f64 = 1e4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceForm {
    #[default]
    Exact,
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KalmanConfig {
    pub sigma2: f64,
    pub eta2: f64,
    /// Initial state mean; zeros when `None`.
    pub x0: Option<Vec<f64>>,
    /// Initial covariance is `c0_scale * I`.
    pub c0_scale: f64,
    pub covariance_form: CovarianceForm,
}

impl KalmanConfig {
    pub fn new(sigma2: f64, eta2: f64) -> Self {
        Self {
            sigma2,
            eta2,
            x0: None,
            c0_scale: DEFAULT_C0_SCALE,
            covariance_form: CovarianceForm::Exact,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be finite and >= 0, got {}", self.sigma2)));
        }
        if !(self.eta2 > 0.0 && self.eta2.is_finite()) {
            return Err(Error::invalid(format!("eta2 must be finite and > 0, got {}", self.eta2)));
        }
        if !(self.c0_scale > 0.0 && self.c0_scale.is_finite()) {
            return Err(Error::invalid("c0_scale must be finite and > 0"));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: x0.len() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrajectory {
    /// Filtered means, one row per time.
    pub states: DMatrix<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    /// `<x_{t-1}, u_t>`, made before `Y_t` is seen.
    pub predictions: Vec<f64>,
    /// `Y_t - prediction`; NaN at missing steps.
    pub innovations: Vec<f64>,
    /// `s_t`; the predictive variance of `Y_t`.
    pub innovation_variances: Vec<f64>,
    pub loglik: f64,
}

impl KalmanTrajectory {
    pub fn final_state(&self) -> DVector<f64> {
        self.states.row(self.states.nrows() - 1).transpose()
    }
}

/// Forecast `<x, u_next>`.
pub fn predict_next(state: &DVector<f64>, u_next: &[f64]) -> Result<f64> {
    if state.len() != u_next.len() {
        return Err(Error::DimensionMismatch { expected: state.len(), found: u_next.len() });
    }
    if u_next.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("u_next contains non-finite entries"));
    }
    Ok(state.iter().zip(u_next).map(|(a, b)| a * b).sum())
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

struct Recorder {
    states: DMatrix<f64>,
    covariances: Vec<DMatrix<f64>>,
    predictions: Vec<f64>,
    innovations: Vec<f64>,
    variances: Vec<f64>,
}

fn run(dataset: &RegressionDataset, config: &KalmanConfig, mut rec: Option<&mut Recorder>) -> Result<f64> {
    let n = dataset.dim();
    config.validate(n)?;
    let mut x = match &config.x0 {
        Some(x0) => DVector::from_column_slice(x0),
        None => DVector::zeros(n),
    };
    let mut c = DMatrix::identity(n, n) * config.c0_scale;
    let mut loglik = 0.0;
    let mut prev_time = 0usize;

    for t in 0..dataset.horizon() {
        let time = dataset.times()[t];
        let steps = (time - prev_time) as f64;
        prev_time = time;
        for i in 0..n {
            c[(i, i)] += steps * config.sigma2;
        }
        let u = dataset.row(t);
        let prediction = x.dot(&u);
        let pu = &c * &u;
        let s = pu.dot(&u) + config.eta2;

        let mut innovation = f64::NAN;
        if dataset.observed()[t] {
            innovation = dataset.y()[t] - prediction;
            x.axpy(innovation / s, &pu, 1.0);
            match config.covariance_form {
                CovarianceForm::Exact => {
                    c.ger(-1.0 / s, &pu, &pu, 1.0);
                    // Rank-one downdates drift from symmetry in floating point.
                    c = (&c + c.transpose()) * 0.5;
                }
                CovarianceForm::Scaled => c *= config.eta2 / s,
            }
            loglik -= 0.5 * (LN_2PI + s.ln() + innovation * innovation / s);
        }
        if !(s.is_finite() && x.iter().all(|v| v.is_finite())) {
            return Err(Error::Divergence(format!("non-finite filter state at time {time}")));
        }
        if let Some(r) = rec.as_deref_mut() {
            r.states.set_row(t, &x.transpose());
            r.covariances.push(c.clone());
            r.predictions.push(prediction);
            r.innovations.push(innovation);
            r.variances.push(s);
        }
    }
    Ok(loglik)
}

/// Runs the filter over every row; missing rows only propagate.
pub fn filter(dataset: &RegressionDataset, config: &KalmanConfig) -> Result<KalmanTrajectory> {
    let t = dataset.horizon();
    let mut rec = Recorder {
        states: DMatrix::zeros(t, dataset.dim()),
        covariances: Vec::with_capacity(t),
        predictions: Vec::with_capacity(t),
        innovations: Vec::with_capacity(t),
        variances: Vec::with_capacity(t),
    };
    let loglik = run(dataset, config, Some(&mut rec))?;
    Ok(KalmanTrajectory {
        states: rec.states,
        covariances: rec.covariances,
        predictions: rec.predictions,
        innovations: rec.innovations,
        innovation_variances: rec.variances,
        loglik,
    })
}

/// Gaussian log-likelihood of the observed values, without recording the
/// trajectory.
pub fn log_likelihood(dataset: &RegressionDataset, config: &KalmanConfig) -> Result<f64> {
    run(dataset, config, None)
}
