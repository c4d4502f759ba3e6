//! Structured operators of the random-walk regression model.
//!
//! The observations stack into `Y = O_u S h + z`, where `S` is the block
//! prefix-sum taking process-noise increments to states and `O_u` takes the
//! state at each time to its inner product with the observation vector. The
//! estimator only ever needs the Gram matrix `(O_u S)(O_u S)^T`, which has the
//! closed form `G[s, t] = min(s, t) * <u_s, u_t>` and is `T' x T'` instead of
//! `T' x Tn`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Default threshold below which an observation vector is treated as zero.
pub const DEFAULT_MIN_ROW_NORM: f64 = 1e-8;

/// Largest time horizon for which the dense system operator may be built.
pub const DENSE_OPERATOR_MAX_HORIZON: usize = 64;

/// Observation vectors `u_t`, observations `Y_t` and a missingness mask.
///
/// Every row also carries its original 1-based time index. Rows removed by
/// [`filter_rows`] keep the remaining rows' indices unchanged, because the
/// random walk still advances through the deleted steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    u: DMatrix<f64>,
    y: Vec<f64>,
    observed: Vec<bool>,
    times: Vec<usize>,
}

impl RegressionDataset {
    /// Builds a dataset with consecutive time indices `1..=T`.
    pub fn new(u: DMatrix<f64>, y: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        let times = (1..=u.nrows()).collect();
        Self::with_times(u, y, observed, times)
    }

    /// Builds a dataset with every observation available.
    pub fn fully_observed(u: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let observed = vec![true; y.len()];
        Self::new(u, y, observed)
    }

    /// Builds a dataset whose rows sit at the given (strictly increasing,
    /// 1-based) time indices.
    pub fn with_times(
        u: DMatrix<f64>,
        y: Vec<f64>,
        observed: Vec<bool>,
        times: Vec<usize>,
    ) -> Result<Self> {
        let rows = u.nrows();
        if u.ncols() == 0 {
            return Err(Error::invalid("observation vectors must have dimension n >= 1"));
        }
        if rows < 2 {
            return Err(Error::InsufficientRows { needed: 2, found: rows });
        }
        for len in [y.len(), observed.len(), times.len()] {
            if len != rows {
                return Err(Error::DimensionMismatch { expected: rows, found: len });
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation vectors contain non-finite entries"));
        }
        if let Some(t) = (0..rows).find(|&t| observed[t] && !y[t].is_finite()) {
            return Err(Error::invalid(format!("observation at row {} is not finite", t + 1)));
        }
        if times[0] == 0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time indices must be 1-based and strictly increasing"));
        }
        let effective = observed.iter().filter(|&&o| o).count();
        if effective < 2 {
            return Err(Error::InsufficientRows { needed: 2, found: effective });
        }
        Ok(Self { u, y, observed, times })
    }

    /// Number of rows `T`.
    pub fn horizon(&self) -> usize {
        self.u.nrows()
    }

    /// Dimension `n` of the state.
    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    /// Number of rows with an available observation.
    pub fn effective_horizon(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn row(&self, t: usize) -> DVector<f64> {
        self.u.row(t).transpose()
    }

    pub fn row_norm(&self, t: usize) -> f64 {
        self.u.row(t).norm()
    }

    /// Indices (0-based rows) of observed entries.
    pub fn observed_rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.horizon()).filter(move |&t| self.observed[t])
    }

    /// Observations at observed rows, in order.
    pub fn observed_y(&self) -> Vec<f64> {
        self.observed_rows().map(|t| self.y[t]).collect()
    }

    /// Same observation vectors and mask with a new observation series.
    pub fn with_observations(&self, y: Vec<f64>) -> Result<Self> {
        Self::with_times(self.u.clone(), y, self.observed.clone(), self.times.clone())
    }

    /// Rows `range`, with time indices rebased so the slice starts a fresh
    /// random walk at the step following the preceding row.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.horizon() || range.start >= range.end {
            return Err(Error::invalid(format!(
                "row range {}..{} outside 0..{}",
                range.start,
                range.end,
                self.horizon()
            )));
        }
        let base = if range.start == 0 { 0 } else { self.times[range.start - 1] };
        let u = self.u.rows(range.start, range.len()).into_owned();
        Self::with_times(
            u,
            self.y[range.clone()].to_vec(),
            self.observed[range.clone()].to_vec(),
            self.times[range].iter().map(|t| t - base).collect(),
        )
    }
}

/// Norm statistics of the retained observation vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormSummary {
    pub u_min_norm: f64,
    pub u_max_norm: f64,
    /// `min_t |sum_j u_tj|`.
    pub u_tilde_min: f64,
    pub u_tilde_max: f64,
}

impl NormSummary {
    /// Summary over the observed rows of `dataset`.
    pub fn of(dataset: &RegressionDataset) -> Self {
        let mut s = NormSummary {
            u_min_norm: f64::INFINITY,
            u_max_norm: 0.0,
            u_tilde_min: f64::INFINITY,
            u_tilde_max: 0.0,
        };
        for t in dataset.observed_rows() {
            let row = dataset.u.row(t);
            let norm = row.norm();
            let tilde = row.sum().abs();
            s.u_min_norm = s.u_min_norm.min(norm);
            s.u_max_norm = s.u_max_norm.max(norm);
            s.u_tilde_min = s.u_tilde_min.min(tilde);
            s.u_tilde_max = s.u_tilde_max.max(tilde);
        }
        s
    }
}

/// Which rows [`filter_rows`] kept and why the others went.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterReport {
    /// Original time indices of retained rows.
    pub retained: Vec<usize>,
    pub dropped_missing: Vec<usize>,
    pub dropped_low_norm: Vec<usize>,
}

impl FilterReport {
    pub fn dropped(&self) -> usize {
        self.dropped_missing.len() + self.dropped_low_norm.len()
    }
}

/// Drops rows without an observation and rows with `||u_t|| <= min_norm`.
///
/// The result is fully observed and keeps each retained row's original time
/// index.
pub fn filter_rows(
    dataset: &RegressionDataset,
    min_norm: f64,
) -> Result<(RegressionDataset, FilterReport)> {
    if !(min_norm >= 0.0) {
        return Err(Error::invalid("min_norm must be a non-negative number"));
    }
    let mut report = FilterReport::default();
    let mut keep = Vec::with_capacity(dataset.horizon());
    for t in 0..dataset.horizon() {
        let time = dataset.times[t];
        if !dataset.observed[t] {
            report.dropped_missing.push(time);
        } else if dataset.row_norm(t) <= min_norm {
            report.dropped_low_norm.push(time);
        } else {
            keep.push(t);
            report.retained.push(time);
        }
    }
    if keep.len() < 2 {
        return Err(Error::InsufficientRows { needed: 2, found: keep.len() });
    }
    let u = dataset.u.select_rows(keep.iter());
    let y = keep.iter().map(|&t| dataset.y[t]).collect();
    let filtered = RegressionDataset::with_times(
        u,
        y,
        vec![true; keep.len()],
        report.retained.clone(),
    )?;
    Ok((filtered, report))
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("input vector contains non-finite entries"))
    }
}

/// Prefix sums `(h_1, h_1 + h_2, ...)`.
pub fn apply_summation(h: &[f64]) -> Result<Vec<f64>> {
    if h.is_empty() {
        return Err(Error::invalid("summation input must be non-empty"));
    }
    check_finite(h)?;
    Ok(h.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect())
}

/// First differences; the inverse of [`apply_summation`].
pub fn apply_difference(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::invalid("difference input must be non-empty"));
    }
    check_finite(x)?;
    let mut out = Vec::with_capacity(x.len());
    out.push(x[0]);
    out.extend(x.windows(2).map(|w| w[1] - w[0]));
    Ok(out)
}

/// Block prefix sum on `R^{mn}`: time block `t` of the output is the sum of
/// blocks `1..=t` of the input.
pub fn apply_block_summation(h: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 || h.is_empty() || h.len() % n != 0 {
        return Err(Error::invalid("block summation input length must be a positive multiple of n"));
    }
    check_finite(h)?;
    let mut out = h.to_vec();
    for i in n..out.len() {
        out[i] += out[i - n];
    }
    Ok(out)
}

/// `(O_u x)_t = <u_t, x_t>` over the observed rows, where `x` stacks one
/// length-`n` block per observed row.
pub fn apply_observation(dataset: &RegressionDataset, x: &[f64]) -> Result<Vec<f64>> {
    let n = dataset.dim();
    let rows: Vec<usize> = dataset.observed_rows().collect();
    if x.len() != rows.len() * n {
        return Err(Error::DimensionMismatch { expected: rows.len() * n, found: x.len() });
    }
    Ok(rows
        .iter()
        .zip(x.chunks_exact(n))
        .map(|(&t, block)| dataset.u.row(t).iter().zip(block).map(|(a, b)| a * b).sum())
        .collect())
}

fn require_nonzero_rows(dataset: &RegressionDataset) -> Result<()> {
    match dataset.observed_rows().find(|&t| dataset.row_norm(t) == 0.0) {
        Some(t) => Err(Error::invalid(format!(
            "observation vector at time {} is zero; filter rows first",
            dataset.times[t]
        ))),
        None => Ok(()),
    }
}

/// Gram matrix `(O_u S)(O_u S)^T` over the observed rows.
///
/// Entry `(s, t)` is `min(tau_s, tau_t) * <u_s, u_t>` with `tau` the original
/// time index, so deleted rows do not renumber the walk.
pub fn gram_matrix(dataset: &RegressionDataset) -> Result<DMatrix<f64>> {
    require_nonzero_rows(dataset)?;
    let rows: Vec<usize> = dataset.observed_rows().collect();
    let m = rows.len();
    // Row-major copy of the retained vectors keeps the inner products contiguous.
    let n = dataset.dim();
    let packed: Vec<f64> = rows
        .iter()
        .flat_map(|&t| dataset.u.row(t).iter().copied().collect::<Vec<_>>())
        .collect();
    let mut g = DMatrix::zeros(m, m);
    for j in 0..m {
        let uj = &packed[j * n..(j + 1) * n];
        for i in j..m {
            let ui = &packed[i * n..(i + 1) * n];
            let dot: f64 = ui.iter().zip(uj).map(|(a, b)| a * b).sum();
            let tmin = dataset.times[rows[i]].min(dataset.times[rows[j]]) as f64;
            g[(i, j)] = tmin * dot;
            g[(j, i)] = tmin * dot;
        }
    }
    Ok(g)
}

/// `||O_u S||_HS^2 = sum_t tau_t ||u_t||^2` over observed rows.
pub fn hs_norm_squared(dataset: &RegressionDataset) -> f64 {
    dataset
        .observed_rows()
        .map(|t| dataset.times[t] as f64 * dataset.u.row(t).norm_squared())
        .sum()
}

/// Dense `O_u S` restricted to the observed rows, mapping the stacked
/// increments `h in R^{tau_max * n}` to noiseless outputs.
///
/// Only for small horizons; used to cross-check the Gram-matrix path.
pub fn system_operator_dense(dataset: &RegressionDataset) -> Result<DMatrix<f64>> {
    let rows: Vec<usize> = dataset.observed_rows().collect();
    let tau_max = rows.iter().map(|&t| dataset.times[t]).max().unwrap_or(0);
    if tau_max > DENSE_OPERATOR_MAX_HORIZON {
        return Err(Error::invalid(format!(
            "dense operator limited to horizons <= {DENSE_OPERATOR_MAX_HORIZON}, got {tau_max}"
        )));
    }
    let n = dataset.dim();
    let mut op = DMatrix::zeros(rows.len(), tau_max * n);
    for (r, &t) in rows.iter().enumerate() {
        for block in 0..dataset.times[t] {
            for j in 0..n {
                op[(r, block * n + j)] = dataset.u[(t, j)];
            }
        }
    }
    Ok(op)
}

/// Singular values `2 sin(pi (T - l) / (2T))`, `l = 1..T-1`, of the
/// `(T-1) x T` first-difference operator, in descending order.
pub fn difference_spectrum(horizon: usize) -> Result<Vec<f64>> {
    if horizon < 2 {
        return Err(Error::InsufficientRows { needed: 2, found: horizon });
    }
    let t = horizon as f64;
    Ok((1..horizon)
        .map(|l| 2.0 * (std::f64::consts::PI * (t - l as f64) / (2.0 * t)).sin())
        .collect())
}
