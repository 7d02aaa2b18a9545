//! Small dense linear-algebra helpers: Cholesky solve for symmetric
//! positive-definite systems and a power-iteration spectral-norm estimate.
//!
//! The Hessians this crate solves against are a few hundred rows at most,
//! so an unblocked Cholesky is plenty.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Cholesky factor L (lower triangular) of a symmetric positive-definite
/// matrix, `a = L Lᵀ`. Fails if a non-positive pivot is encountered.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::config("cholesky: matrix not square"));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::numerical(format!(
                        "cholesky: non-positive pivot {s:.3e} at row {i}; matrix not positive definite"
                    )));
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve `a x = b` for symmetric positive-definite `a` via Cholesky.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let l = cholesky(a)?;
    Ok(cholesky_solve(&l, b))
}

/// Solve `L Lᵀ x = b` given the Cholesky factor L.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    // forward: L y = b
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    // backward: Lᵀ x = y
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Largest eigenvalue of a symmetric PSD operator given as a matvec,
/// estimated by power iteration. Deterministic start vector.
pub fn spectral_norm_sym<F>(dim: usize, matvec: F, iters: usize) -> f64
where
    F: Fn(&Array1<f64>) -> Array1<f64>,
{
    let mut v = Array1::from_shape_fn(dim, |i| 1.0 + (i as f64 * 0.7).sin());
    let mut norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = matvec(&v);
        lambda = v.dot(&w);
        norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    lambda.max(0.0)
}

/// Max absolute entry of `a - aᵀ`.
pub fn asymmetry(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}
