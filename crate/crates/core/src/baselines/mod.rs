//! Comparison forecasters and the likelihood-based variance estimator.

pub mod mle;
pub mod nelder_mead;
pub mod online_gradient;
pub mod stationary;

pub use mle::{mle_fit, MleOptions, MleResult};
pub use online_gradient::{
    online_gradient_run, online_gradient_run_with_gains, tune_learning_rate, OnlineGradientConfig,
    OnlineGradientRun, TuningOptions,
};
pub use stationary::{predict_all, stationary_regression};
