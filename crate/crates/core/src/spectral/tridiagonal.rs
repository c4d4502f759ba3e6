//! Householder tridiagonalization followed by implicit-shift QL.
//!
//! The orthogonal factors can either be accumulated into a full basis or
//! applied only to a few vectors, which turns the `O(m^3)` basis accumulation
//! into `O(m^2)` work per vector.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_QL_ITERATIONS: usize = 60;

struct Reflector {
    /// Householder vector for rows `k+1..m`.
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    /// `x <- (I - beta v v^T) x` on the trailing rows starting at `offset`.
    fn apply(&self, x: &mut [f64], offset: usize) {
        let tail = &mut x[offset..];
        let dot: f64 = self.v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
        let f = self.beta * dot;
        for (xi, vi) in tail.iter_mut().zip(&self.v) {
            *xi -= f * vi;
        }
    }
}

struct Tridiagonal {
    diag: Vec<f64>,
    /// `off[i]` couples `i` and `i + 1`; `off[m - 1] = 0`.
    off: Vec<f64>,
    reflectors: Vec<Reflector>,
}

fn tridiagonalize(a: &DMatrix<f64>) -> Tridiagonal {
    let m = a.nrows();
    // Column-major working copy: `w[j * m + i] = a[i, j]`.
    let mut w: Vec<f64> = a.as_slice().to_vec();
    let mut reflectors = Vec::with_capacity(m.saturating_sub(2));
    let mut off = vec![0.0; m];
    let mut p = vec![0.0; m];

    for k in 0..m.saturating_sub(2) {
        let start = k + 1;
        let len = m - start;
        let col = &w[k * m + start..k * m + m];
        let sigma: f64 = col[1..].iter().map(|x| x * x).sum();
        let x0 = col[0];
        if sigma == 0.0 {
            off[k] = x0;
            reflectors.push(Reflector { v: vec![0.0; len], beta: 0.0 });
            continue;
        }
        let norm = (x0 * x0 + sigma).sqrt();
        let alpha = if x0 > 0.0 { -norm } else { norm };
        let mut v = col.to_vec();
        v[0] -= alpha;
        let vnorm_sq = sigma + v[0] * v[0];
        let beta = 2.0 / vnorm_sq;
        off[k] = alpha;

        // p = beta * A_sub v over the trailing block.
        let p = &mut p[..len];
        p.iter_mut().for_each(|x| *x = 0.0);
        for (jj, &vj) in v.iter().enumerate() {
            let colj = &w[(start + jj) * m + start..(start + jj) * m + m];
            for (pi, aij) in p.iter_mut().zip(colj) {
                *pi += aij * vj;
            }
        }
        p.iter_mut().for_each(|x| *x *= beta);
        let pv: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
        let half = 0.5 * beta * pv;
        for (pi, vi) in p.iter_mut().zip(&v) {
            *pi -= half * vi;
        }
        // A_sub <- A_sub - v q^T - q v^T with q the corrected p.
        for jj in 0..len {
            let (vj, qj) = (v[jj], p[jj]);
            let colj = &mut w[(start + jj) * m + start..(start + jj) * m + m];
            for ii in 0..len {
                colj[ii] -= v[ii] * qj + p[ii] * vj;
            }
        }
        reflectors.push(Reflector { v, beta });
    }
    if m >= 2 {
        off[m - 2] = w[(m - 2) * m + (m - 1)];
    }
    let diag = (0..m).map(|i| w[i * m + i]).collect();
    Tridiagonal { diag, off, reflectors }
}

/// Implicit QL on a symmetric tridiagonal matrix. `rotate(i, c, s)` receives
/// each plane rotation acting on coordinates `i` and `i + 1`.
fn tridiagonal_ql(
    diag: &mut [f64],
    off: &mut [f64],
    mut rotate: impl FnMut(usize, f64, f64),
) -> Result<()> {
    let m = diag.len();
    for l in 0..m {
        let mut iterations = 0;
        loop {
            let mut k = l;
            while k + 1 < m {
                let dd = diag[k].abs() + diag[k + 1].abs();
                if off[k].abs() <= f64::EPSILON * dd {
                    break;
                }
                k += 1;
            }
            if k == l {
                break;
            }
            iterations += 1;
            if iterations > MAX_QL_ITERATIONS {
                return Err(Error::NonConvergence { sweeps: MAX_QL_ITERATIONS });
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[k] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..k).rev() {
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[k] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                rotate(i, c, s);
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[k] = 0.0;
        }
    }
    Ok(())
}

/// Unsorted eigenvalues and the full orthonormal eigenbasis.
pub fn eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = a.nrows();
    let mut tri = tridiagonalize(a);
    // Q = H_0 H_1 ... ; columns of Q are built by applying the reflectors in
    // reverse to the identity.
    let mut q = DMatrix::<f64>::identity(m, m);
    for col in q.as_mut_slice().chunks_exact_mut(m) {
        for (k, h) in tri.reflectors.iter().enumerate().rev() {
            h.apply(col, k + 1);
        }
    }
    tridiagonal_ql(&mut tri.diag, &mut tri.off, |i, c, s| {
        for row in 0..m {
            let f = q[(row, i + 1)];
            let e = q[(row, i)];
            q[(row, i + 1)] = s * e + c * f;
            q[(row, i)] = c * e - s * f;
        }
    })?;
    Ok((tri.diag, q))
}

/// Unsorted eigenvalues together with `U^T x` for each input vector, without
/// forming `U`.
pub fn eigen_projected(a: &DMatrix<f64>, vectors: &[&[f64]]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = a.nrows();
    if let Some(v) = vectors.iter().find(|v| v.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, found: v.len() });
    }
    let mut tri = tridiagonalize(a);
    let mut coords: Vec<Vec<f64>> = vectors.iter().map(|v| v.to_vec()).collect();
    for x in coords.iter_mut() {
        for (k, h) in tri.reflectors.iter().enumerate() {
            h.apply(x, k + 1);
        }
    }
    tridiagonal_ql(&mut tri.diag, &mut tri.off, |i, c, s| {
        for x in coords.iter_mut() {
            let f = x[i + 1];
            let e = x[i];
            x[i + 1] = s * e + c * f;
            x[i] = c * e - s * f;
        }
    })?;
    Ok((tri.diag, coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn test_matrix(m: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(m, m, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0);
        &b * b.transpose() + DMatrix::identity(m, m)
    }

    #[test]
    fn full_basis_diagonalizes() {
        for m in [1, 2, 3, 7, 20] {
            let a = test_matrix(m);
            let (vals, q) = eigen(&a).unwrap();
            let recon = &q * DMatrix::from_diagonal(&DVector::from_vec(vals)) * q.transpose();
            assert!((recon - &a).norm() < 1e-10 * a.norm(), "m = {m}");
            assert!((q.transpose() * &q - DMatrix::identity(m, m)).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_matches_full_basis() {
        let a = test_matrix(15);
        let x: Vec<f64> = (0..15).map(|i| (i as f64).sin()).collect();
        let (vals, q) = eigen(&a).unwrap();
        let (vals2, coords) = eigen_projected(&a, &[&x]).unwrap();
        let direct = q.transpose() * DVector::from_column_slice(&x);
        for i in 0..15 {
            assert!((vals[i] - vals2[i]).abs() < 1e-10 * vals[i].abs().max(1.0));
            assert!((direct[i] - coords[0][i]).abs() < 1e-10);
        }
    }
}
