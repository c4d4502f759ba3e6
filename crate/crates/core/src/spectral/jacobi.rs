//! Cyclic Jacobi eigensolver for dense symmetric matrices.
//!
//! Rotations are skipped only when `|a_pq| <= eps * sqrt(|a_pp a_qq|)`, which
//! keeps high relative accuracy in the small eigenvalues of positive definite
//! input.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;

/// Unsorted eigenpairs of the symmetric matrix `a`.
pub fn eigen(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let eps = f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                if apq.abs() <= eps * (app * aqq).abs().sqrt() || apq == 0.0 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;

                // A <- J^T A J on rows/columns p and q.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                let (vp, vq) = (v.column(p).clone_owned(), v.column(q).clone_owned());
                v.set_column(p, &(&vp * c - &vq * s));
                v.set_column(q, &(&vp * s + &vq * c));
            }
        }
        if !rotated {
            return Ok((a.diagonal(), v));
        }
    }
    Err(Error::NonConvergence { sweeps: MAX_SWEEPS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = eigen(&a).unwrap();
        let mut sorted: Vec<f64> = vals.iter().copied().collect();
        sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let s5 = 5f64.sqrt();
        assert!((sorted[0] - (3.0 + s5) / 2.0).abs() < 1e-14);
        assert!((sorted[1] - (3.0 - s5) / 2.0).abs() < 1e-14);
        assert!((vecs.transpose() * &vecs - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn diagonal_input_needs_no_rotation() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let (vals, vecs) = eigen(&a).unwrap();
        assert_eq!(vals.as_slice(), &[4.0, 1.0]);
        assert_eq!(vecs, DMatrix::identity(2, 2));
    }
}
