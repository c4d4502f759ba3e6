//! Variance estimation for dynamic linear regression.
//!
//! The model is a random walk observed through known vectors:
//!
//! ```text
//! X_{t+1} = X_t + h_t          h_t ~ n independent coordinates, variance sigma^2
//! Y_t     = <X_t, u_t> + z_t   z_t ~ variance eta^2
//! ```
//!
//! [`estimator::estimate`] recovers `(sigma^2, eta^2)` from one trajectory by
//! solving two moment equations built from the pseudo-inverse of the system
//! operator and its spectral truncation. The crate also provides the Kalman
//! filter that consumes those variances, baseline forecasters, a simulator
//! and CSV tooling.

// `!(x > 0.0)` guards are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// `is_multiple_of` is newer than the supported toolchain.
#![allow(clippy::manual_is_multiple_of)]

pub mod baselines;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod estimator;
pub mod kalman;
pub mod operators;
pub mod simulator;
pub mod spectral;

pub use error::{Error, Result};
pub use estimator::{estimate, StveConfig, StveEstimate};
pub use kalman::{filter, KalmanConfig, KalmanTrajectory};
pub use operators::RegressionDataset;
pub use simulator::{simulate, NoiseFamily, NoiseSpec, SimulationConfig};
