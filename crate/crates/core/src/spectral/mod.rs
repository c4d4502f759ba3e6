//! Spectrum of the Gram matrix and the inverse-spectrum functionals.
//!
//! With `O_u S = U diag(gamma) W` the pseudo-inverse is
//! `R = W^T diag(1/gamma) U^T`, so `||R y||^2 = sum_i (U^T y)_i^2 / gamma_i^2`
//! and `||R||_HS^2 = sum_i 1/gamma_i^2`. The truncated inverse `R'` keeps the
//! `p` largest inverse singular values, i.e. the `p` smallest `gamma`.

pub mod jacobi;
pub mod tridiagonal;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Matrices up to this order go to the Jacobi solver under [`EigenMethod::Auto`].
pub const JACOBI_MAX_ORDER: usize = 96;

const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric eigensolver choice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Jacobi for small matrices, tridiagonal QL above [`JACOBI_MAX_ORDER`].
    #[default]
    Auto,
    Jacobi,
    TridiagonalQl,
}

impl EigenMethod {
    fn resolve(self, order: usize) -> Self {
        match self {
            EigenMethod::Auto if order <= JACOBI_MAX_ORDER => EigenMethod::Jacobi,
            EigenMethod::Auto => EigenMethod::TridiagonalQl,
            other => other,
        }
    }
}

/// Squared singular values of `O_u S` (descending) and the left singular
/// vectors as columns of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSpectrum {
    pub gamma_sq: DVector<f64>,
    pub basis: DMatrix<f64>,
}

/// Squared singular values together with `U^T y`; everything the estimator
/// needs without the basis itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSpectrum {
    pub gamma_sq: DVector<f64>,
    pub coords: DVector<f64>,
}

impl GramSpectrum {
    pub fn order(&self) -> usize {
        self.gamma_sq.len()
    }

    /// Coordinates of `y` in the eigenbasis.
    pub fn project(&self, y: &[f64]) -> Result<ProjectedSpectrum> {
        if y.len() != self.order() {
            return Err(Error::DimensionMismatch { expected: self.order(), found: y.len() });
        }
        Ok(ProjectedSpectrum {
            gamma_sq: self.gamma_sq.clone(),
            coords: self.basis.tr_mul(&DVector::from_column_slice(y)),
        })
    }

    /// `sigma_i = 1 / gamma_{T'+1-i}`, the singular values of `R`, descending.
    pub fn inverse_singular_values_sq(&self) -> Vec<f64> {
        self.gamma_sq.iter().rev().map(|g| 1.0 / g).collect()
    }
}

fn validate_symmetric(gram: &DMatrix<f64>) -> Result<()> {
    if !gram.is_square() {
        return Err(Error::DimensionMismatch { expected: gram.nrows(), found: gram.ncols() });
    }
    if gram.nrows() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    let scale = gram.amax().max(f64::MIN_POSITIVE);
    let m = gram.nrows();
    for j in 0..m {
        for i in (j + 1)..m {
            if (gram[(i, j)] - gram[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Descending permutation of `values`, rejecting non-positive entries.
fn descending_order(values: &[f64]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let largest = values[order[0]];
    let floor = values.len() as f64 * f64::EPSILON * largest.abs();
    let last = order[order.len() - 1];
    if !(values[last] > floor) {
        return Err(Error::NotPositiveDefinite { index: order.len() - 1, value: values[last] });
    }
    Ok(order)
}

/// Eigendecomposition of the Gram matrix with the default solver.
pub fn eigendecompose(gram: &DMatrix<f64>) -> Result<GramSpectrum> {
    eigendecompose_with(gram, EigenMethod::Auto)
}

pub fn eigendecompose_with(gram: &DMatrix<f64>, method: EigenMethod) -> Result<GramSpectrum> {
    validate_symmetric(gram)?;
    let (values, vectors) = match method.resolve(gram.nrows()) {
        EigenMethod::Jacobi => {
            let (vals, vecs) = jacobi::eigen(gram)?;
            (vals.iter().copied().collect::<Vec<_>>(), vecs)
        }
        _ => tridiagonal::eigen(gram)?,
    };
    let order = descending_order(&values)?;
    Ok(GramSpectrum {
        gamma_sq: DVector::from_iterator(order.len(), order.iter().map(|&i| values[i])),
        basis: vectors.select_columns(order.iter()),
    })
}

/// Eigenvalues of the Gram matrix and the eigen-coordinates of `y`.
///
/// Uses the tridiagonal solver without accumulating the basis, unless the
/// method resolves to Jacobi.
pub fn eigen_projected(
    gram: &DMatrix<f64>,
    y: &[f64],
    method: EigenMethod,
) -> Result<ProjectedSpectrum> {
    validate_symmetric(gram)?;
    if y.len() != gram.nrows() {
        return Err(Error::DimensionMismatch { expected: gram.nrows(), found: y.len() });
    }
    match method.resolve(gram.nrows()) {
        EigenMethod::Jacobi => eigendecompose_with(gram, EigenMethod::Jacobi)?.project(y),
        _ => {
            let (values, coords) = tridiagonal::eigen_projected(gram, &[y])?;
            let order = descending_order(&values)?;
            let m = order.len();
            Ok(ProjectedSpectrum {
                gamma_sq: DVector::from_iterator(m, order.iter().map(|&i| values[i])),
                coords: DVector::from_iterator(m, order.iter().map(|&i| coords[0][i])),
            })
        }
    }
}

/// Hilbert-Schmidt functionals of `R` and `R'` at truncation `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralFunctionals {
    /// `||R||_HS^2 = sum_i gamma_i^-2`.
    pub hs_r_sq: f64,
    /// `||R'||_HS^2`, the sum over the `p` smallest `gamma`.
    pub hs_rp_sq: f64,
    pub p: usize,
    pub effective_t: usize,
    /// `(hs_rp_sq / p) / (hs_r_sq / T')`, at least 1.
    pub gap_ratio: f64,
}

impl SpectralFunctionals {
    /// `||R'||^2/p - ||R||^2/T'`, the determinant-like quantity of the
    /// moment system.
    pub fn gap(&self) -> f64 {
        self.hs_rp_sq / self.p as f64 - self.hs_r_sq / self.effective_t as f64
    }
}

fn check_truncation(p: usize, order: usize) -> Result<()> {
    if p == 0 || p > order {
        return Err(Error::invalid(format!("truncation p = {p} outside 1..={order}")));
    }
    Ok(())
}

/// Spectral functionals from a descending `gamma_sq`.
pub fn functionals_from(gamma_sq: &DVector<f64>, p: usize) -> Result<SpectralFunctionals> {
    let m = gamma_sq.len();
    check_truncation(p, m)?;
    let hs_r_sq: f64 = gamma_sq.iter().map(|g| 1.0 / g).sum();
    let hs_rp_sq: f64 = gamma_sq.iter().skip(m - p).map(|g| 1.0 / g).sum();
    let gap_ratio = (hs_rp_sq / p as f64) / (hs_r_sq / m as f64);
    Ok(SpectralFunctionals { hs_r_sq, hs_rp_sq, p, effective_t: m, gap_ratio })
}

pub fn functionals(spec: &GramSpectrum, p: usize) -> Result<SpectralFunctionals> {
    functionals_from(&spec.gamma_sq, p)
}

/// `(||R y||^2, ||R' y||^2)` from eigen-coordinates.
pub fn quadratic_forms_projected(proj: &ProjectedSpectrum, p: usize) -> Result<(f64, f64)> {
    let m = proj.gamma_sq.len();
    check_truncation(p, m)?;
    let terms = proj.coords.iter().zip(proj.gamma_sq.iter()).map(|(c, g)| c * c / g);
    let mut r_sq = 0.0;
    let mut rp_sq = 0.0;
    for (i, term) in terms.enumerate() {
        r_sq += term;
        if i >= m - p {
            rp_sq += term;
        }
    }
    Ok((r_sq, rp_sq))
}

/// `(||R y||^2, ||R' y||^2)` for observations `y` on the retained rows.
pub fn quadratic_forms(spec: &GramSpectrum, y: &[f64], p: usize) -> Result<(f64, f64)> {
    quadratic_forms_projected(&spec.project(y)?, p)
}

/// `p = ceil(alpha * T')`, clamped to `1..=T'`.
pub fn truncation_index(alpha: f64, effective_t: usize) -> usize {
    ((alpha * effective_t as f64).ceil() as usize).clamp(1, effective_t)
}
