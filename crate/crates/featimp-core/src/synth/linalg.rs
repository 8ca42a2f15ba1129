//! Minimal dense linear algebra for the generators: Cholesky factorization
//! and triangular solves on small row-major matrices.

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
/// (row-major `n x n`). Fails if the matrix is not positive definite.
pub fn cholesky(matrix: &[f64], n: usize) -> Result<Vec<f64>> {
    if matrix.len() != n * n {
        return Err(Error::ShapeMismatch {
            what: "cholesky input",
            expected: n * n,
            actual: matrix.len(),
        });
    }
    let mut lower = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[i * n + j];
            for k in 0..j {
                sum -= lower[i * n + k] * lower[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Generation(format!(
                        "covariance is not positive definite (pivot {i})"
                    )));
                }
                lower[i * n + j] = sum.sqrt();
            } else {
                lower[i * n + j] = sum / lower[j * n + j];
            }
        }
    }
    Ok(lower)
}

/// Solve `L y = b` for lower-triangular `L` by forward substitution.
pub fn forward_substitute(lower: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= lower[i * n + k] * y[k];
        }
        y[i] = sum / lower[i * n + i];
    }
    y
}

/// `y = L x` for lower-triangular `L`.
pub fn lower_mul(lower: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = 0.0;
        for k in 0..=i {
            sum += lower[i * n + k] * x[k];
        }
        y[i] = sum;
    }
    y
}
