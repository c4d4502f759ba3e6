//! C interface to the `stve` estimator.
//!
//! Datasets live behind an opaque `StveDataset` handle created by one of the
//! constructors and released with `stve_dataset_free`. Every fallible call
//! returns a `StveStatus`; on failure a message is available from
//! `stve_last_error_message` until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use stve::estimator::Warning;
use stve::{Error, KalmanConfig, RegressionDataset, SimulationConfig, StveConfig};

/// Opaque dataset handle.
pub struct StveDataset {
    inner: RegressionDataset,
}

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StveStatus {
    STVE_OK = 0,
    STVE_ERR_NULL_POINTER = 1,
    STVE_ERR_INVALID_INPUT = 2,
    STVE_ERR_DIMENSION = 3,
    STVE_ERR_INSUFFICIENT_ROWS = 4,
    /// Flat inverse spectrum: the two moment equations coincide.
    STVE_ERR_SINGULAR = 5,
    /// Eigensolver failure, loss of definiteness or filter divergence.
    STVE_ERR_NUMERICAL = 6,
    STVE_ERR_IO = 7,
    STVE_ERR_PARSE = 8,
    STVE_ERR_PANIC = 9,
}

pub const STVE_WARN_WEAK_GAP: u32 = 1;
pub const STVE_WARN_CLAMPED_ETA2: u32 = 2;
pub const STVE_WARN_CLAMPED_SIGMA2: u32 = 4;
pub const STVE_WARN_ROWS_DROPPED: u32 = 8;

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StveOptions {
    pub alpha: f64,
    pub min_row_norm: f64,
    pub gap_warn_threshold: f64,
    pub clamp_nonnegative: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct StveEstimateResult {
    pub sigma2: f64,
    pub eta2: f64,
    pub sigma2_raw: f64,
    pub eta2_raw: f64,
    pub gap_ratio: f64,
    pub hs_r_sq: f64,
    pub hs_rp_sq: f64,
    pub p: usize,
    pub effective_t: usize,
    /// Bitwise OR of the `STVE_WARN_*` flags.
    pub warnings: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> StveStatus {
    match err {
        Error::InvalidInput(_) => StveStatus::STVE_ERR_INVALID_INPUT,
        Error::DimensionMismatch { .. } => StveStatus::STVE_ERR_DIMENSION,
        Error::InsufficientRows { .. } => StveStatus::STVE_ERR_INSUFFICIENT_ROWS,
        Error::SingularSystem(_) => StveStatus::STVE_ERR_SINGULAR,
        Error::NonConvergence { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::RankDeficient { .. }
        | Error::Divergence(_) => StveStatus::STVE_ERR_NUMERICAL,
        Error::Io(_) => StveStatus::STVE_ERR_IO,
        Error::Parse { .. } | Error::Csv(_) => StveStatus::STVE_ERR_PARSE,
    }
}

fn fail(status: StveStatus, msg: impl Into<String>) -> StveStatus {
    set_last_error(msg);
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), StveStatus>) -> StveStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StveStatus::STVE_OK,
        Ok(Err(status)) => status,
        Err(_) => fail(StveStatus::STVE_ERR_PANIC, "internal panic"),
    }
}

fn lib_err(e: Error) -> StveStatus {
    fail(status_of(&e), e.to_string())
}

fn null_err(name: &str) -> StveStatus {
    fail(StveStatus::STVE_ERR_NULL_POINTER, format!("{name} is null"))
}

unsafe fn dataset_ref<'a>(handle: *const StveDataset) -> Result<&'a RegressionDataset, StveStatus> {
    handle.as_ref().map(|d| &d.inner).ok_or_else(|| null_err("dataset"))
}

unsafe fn store(out: *mut *mut StveDataset, ds: RegressionDataset) -> Result<(), StveStatus> {
    *out = Box::into_raw(Box::new(StveDataset { inner: ds }));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stve_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn stve_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default estimator options.
#[no_mangle]
pub extern "C" fn stve_options_default() -> StveOptions {
    let d = StveConfig::default();
    StveOptions {
        alpha: d.alpha,
        min_row_norm: d.min_row_norm,
        gap_warn_threshold: d.gap_warn_threshold,
        clamp_nonnegative: d.clamp_nonnegative,
    }
}

/// Builds a dataset from a row-major `horizon x dim` matrix `u` and
/// observations `y`.
///
/// `observed` may be NULL (all rows observed); otherwise a zero entry marks
/// a missing observation whose `y` value is ignored.
///
/// # Safety
/// `u` must point to `horizon * dim` doubles, `y` to `horizon` doubles and
/// `observed`, when not NULL, to `horizon` bytes. `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stve_dataset_new(
    u: *const f64,
    y: *const f64,
    observed: *const u8,
    horizon: usize,
    dim: usize,
    out: *mut *mut StveDataset,
) -> StveStatus {
    guard(|| {
        if u.is_null() || y.is_null() || out.is_null() {
            return Err(null_err("u, y or out"));
        }
        let cells = horizon
            .checked_mul(dim)
            .ok_or_else(|| fail(StveStatus::STVE_ERR_INVALID_INPUT, "horizon * dim overflows"))?;
        let u = std::slice::from_raw_parts(u, cells);
        let mut y = std::slice::from_raw_parts(y, horizon).to_vec();
        let mask: Vec<bool> = if observed.is_null() {
            vec![true; horizon]
        } else {
            std::slice::from_raw_parts(observed, horizon).iter().map(|&b| b != 0).collect()
        };
        for (v, &o) in y.iter_mut().zip(&mask) {
            if !o {
                *v = f64::NAN;
            }
        }
        let ds = RegressionDataset::new(DMatrix::from_row_slice(horizon, dim, u), y, mask).map_err(lib_err)?;
        store(out, ds)
    })
}

/// Reads a dataset CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stve_dataset_read_csv(path: *const c_char, out: *mut *mut StveDataset) -> StveStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null_err("path or out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(StveStatus::STVE_ERR_INVALID_INPUT, "path is not valid UTF-8"))?;
        let ds = stve::dataio::read_csv(path).map_err(lib_err)?;
        store(out, ds)
    })
}

/// Simulates a trajectory with Gaussian `u_t` and Gaussian noise.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stve_simulate(
    horizon: usize,
    dim: usize,
    sigma2: f64,
    eta2: f64,
    seed: u64,
    out: *mut *mut StveDataset,
) -> StveStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let cfg = SimulationConfig::gaussian(horizon, dim, sigma2, eta2, seed);
        let (ds, _) = stve::simulate(&cfg).map_err(lib_err)?;
        store(out, ds)
    })
}

/// Releases a dataset. NULL is ignored.
///
/// # Safety
/// `dataset` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn stve_dataset_free(dataset: *mut StveDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stve_dataset_horizon(dataset: *const StveDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.horizon())
}

/// Dimension of `u_t`, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stve_dataset_dim(dataset: *const StveDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.dim())
}

/// Copies the observations into `y` (length `horizon`); missing entries are NaN.
///
/// # Safety
/// `dataset` must be a live handle and `y` must have room for `horizon` doubles.
#[no_mangle]
pub unsafe extern "C" fn stve_dataset_copy_y(dataset: *const StveDataset, y: *mut f64) -> StveStatus {
    guard(|| {
        let ds = dataset_ref(dataset)?;
        if y.is_null() {
            return Err(null_err("y"));
        }
        ptr::copy_nonoverlapping(ds.y().as_ptr(), y, ds.horizon());
        Ok(())
    })
}

/// Estimates `(sigma^2, eta^2)`. `options` may be NULL for defaults.
///
/// # Safety
/// `dataset` must be a live handle, `options` NULL or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stve_estimate(
    dataset: *const StveDataset,
    options: *const StveOptions,
    out: *mut StveEstimateResult,
) -> StveStatus {
    guard(|| {
        let ds = dataset_ref(dataset)?;
        if out.is_null() {
            return Err(null_err("out"));
        }
        let opts = options.as_ref().copied().unwrap_or_else(|| stve_options_default());
        let cfg = StveConfig {
            alpha: opts.alpha,
            min_row_norm: opts.min_row_norm,
            gap_warn_threshold: opts.gap_warn_threshold,
            clamp_nonnegative: opts.clamp_nonnegative,
            ..StveConfig::default()
        };
        let est = stve::estimate(ds, &cfg).map_err(lib_err)?;
        let warnings = est.warnings.iter().fold(0u32, |acc, w| {
            acc | match w {
                Warning::WeakGap { .. } => STVE_WARN_WEAK_GAP,
                Warning::ClampedEta2 { .. } => STVE_WARN_CLAMPED_ETA2,
                Warning::ClampedSigma2 { .. } => STVE_WARN_CLAMPED_SIGMA2,
                Warning::RowsDropped { .. } => STVE_WARN_ROWS_DROPPED,
            }
        });
        *out = StveEstimateResult {
            sigma2: est.sigma2,
            eta2: est.eta2,
            sigma2_raw: est.sigma2_raw,
            eta2_raw: est.eta2_raw,
            gap_ratio: est.functionals.gap_ratio,
            hs_r_sq: est.functionals.hs_r_sq,
            hs_rp_sq: est.functionals.hs_rp_sq,
            p: est.functionals.p,
            effective_t: est.effective_t,
            warnings,
        };
        Ok(())
    })
}

/// Runs the Kalman filter from `x_0 = 0`, `C_0 = c0_scale * I`.
///
/// Any of `predictions` (length `horizon`), `final_state` (length `dim`) and
/// `loglik` may be NULL.
///
/// # Safety
/// `dataset` must be a live handle; non-NULL outputs must have the stated
/// lengths.
#[no_mangle]
pub unsafe extern "C" fn stve_kalman_filter(
    dataset: *const StveDataset,
    sigma2: f64,
    eta2: f64,
    c0_scale: f64,
    predictions: *mut f64,
    final_state: *mut f64,
    loglik: *mut f64,
) -> StveStatus {
    guard(|| {
        let ds = dataset_ref(dataset)?;
        let cfg = KalmanConfig { c0_scale, ..KalmanConfig::new(sigma2, eta2) };
        let traj = stve::filter(ds, &cfg).map_err(lib_err)?;
        if !predictions.is_null() {
            ptr::copy_nonoverlapping(traj.predictions.as_ptr(), predictions, ds.horizon());
        }
        if !final_state.is_null() {
            let x = traj.final_state();
            ptr::copy_nonoverlapping(x.as_ptr(), final_state, ds.dim());
        }
        if let Some(l) = loglik.as_mut() {
            *l = traj.loglik;
        }
        Ok(())
    })
}
