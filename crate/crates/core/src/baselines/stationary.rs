//! Time-invariant least-squares regression.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::RegressionDataset;

/// Ordinary least squares over the observed rows, solved through the SVD of
/// the design matrix.
pub fn stationary_regression(dataset: &RegressionDataset) -> Result<DVector<f64>> {
    let rows: Vec<usize> = dataset.observed_rows().collect();
    let n = dataset.dim();
    if rows.len() < n {
        return Err(Error::InsufficientRows { needed: n, found: rows.len() });
    }
    let design: DMatrix<f64> = dataset.u().select_rows(rows.iter());
    let target = DVector::from_iterator(rows.len(), rows.iter().map(|&t| dataset.y()[t]));
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = rows.len().max(n) as f64 * f64::EPSILON * smax;
    let rank = svd.rank(tol);
    if rank < n {
        return Err(Error::RankDeficient { rank, dim: n });
    }
    svd.solve(&target, tol).map_err(|e| Error::invalid(e.to_string()))
}

/// Predictions `<x, u_t>` for every row.
pub fn predict_all(dataset: &RegressionDataset, coefficients: &DVector<f64>) -> Vec<f64> {
    (dataset.u() * coefficients).iter().copied().collect()
}
