//! Minimal dense matrix helpers sized for the small (n <= dozens) graphs
//! this crate works with, plus a cyclic Jacobi eigensolver for symmetric
//! matrices.

use thiserror::Error;

/// Dense row-major matrix as nested vectors. All graphs here are tiny, so
/// no effort is spent on layout or sparsity.
pub type Mat = Vec<Vec<f64>>;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("jacobi eigensolver did not reach off-diagonal norm {tol:e} in {sweeps} sweeps (residual {residual:e})")]
    NonConvergence {
        tol: f64,
        sweeps: usize,
        residual: f64,
    },
}

pub fn zeros(rows: usize, cols: usize) -> Mat {
    vec![vec![0.0; cols]; rows]
}

pub fn identity(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn transpose(a: &Mat) -> Mat {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut t = zeros(cols, rows);
    for i in 0..rows {
        for j in 0..cols {
            t[j][i] = a[i][j];
        }
    }
    t
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let inner = b.len();
    let m = if inner == 0 { 0 } else { b[0].len() };
    let mut out = zeros(n, m);
    for i in 0..n {
        for k in 0..inner {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn mat_vec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(aij, xj)| aij * xj).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric part (A + A^T) / 2 of a square matrix.
pub fn symmetric_part(a: &Mat) -> Mat {
    let n = a.len();
    let mut s = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[i][j] = 0.5 * (a[i][j] + a[j][i]);
        }
    }
    s
}

fn off_diagonal_norm(a: &Mat) -> f64 {
    let n = a.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[i][j] * a[i][j];
            }
        }
    }
    sum.sqrt()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, returned in
/// ascending order. `tol` bounds the final off-diagonal Frobenius norm.
pub fn jacobi_eigenvalues(sym: &Mat, tol: f64, max_sweeps: usize) -> Result<Vec<f64>, LinalgError> {
    let n = sym.len();
    let mut a: Mat = sym.clone();
    if n <= 1 {
        return Ok(a.iter().enumerate().map(|(i, r)| r[i]).collect());
    }
    for _ in 0..max_sweeps {
        if off_diagonal_norm(&a) <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let residual = off_diagonal_norm(&a);
    if residual > tol {
        return Err(LinalgError::NonConvergence {
            tol,
            sweeps: max_sweeps,
            residual,
        });
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(eig)
}
