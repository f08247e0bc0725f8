//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::{Error, Matrix, Result, Vector};

/// Threshold on the smallest eigenvalue used by every positive-definiteness
/// decision in the crate.
pub const PD_TOL: f64 = 1e-10;

/// Reciprocal condition numbers below this are treated as singular.
const RCOND_MIN: f64 = 1e-14;

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_square(m: &Matrix) -> bool {
    m.nrows() == m.ncols()
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !is_square(m) {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= tol * scale
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::NAN)
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NAN)
}

/// Symmetric matrix with smallest eigenvalue above [`PD_TOL`].
pub fn is_positive_definite(m: &Matrix) -> bool {
    is_symmetric(m, 1e-9) && min_eigenvalue(m) > PD_TOL
}

pub fn is_positive_semidefinite(m: &Matrix) -> bool {
    is_symmetric(m, 1e-9) && min_eigenvalue(m) >= -PD_TOL
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Eigenvalues within [`PD_TOL`] below zero are clamped.
pub fn sym_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&l| l < -PD_TOL || !l.is_finite()) {
        return Err(Error::Numeric {
            context: "matrix square root",
            detail: format!("matrix is not positive semi-definite: eigenvalues {}", eig.eigenvalues),
        });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Inverse principal square root of a symmetric positive definite matrix.
pub fn sym_inv_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&l| l <= PD_TOL || !l.is_finite()) {
        return Err(Error::Numeric {
            context: "inverse square root",
            detail: format!("matrix is not positive definite: eigenvalues {}", eig.eigenvalues),
        });
    }
    let roots = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    m.singular_values().max()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax()
}

/// Solves `m x = rhs`, failing when `m` is numerically singular.
pub fn solve(m: &Matrix, rhs: &Matrix, context: &'static str) -> Result<Matrix> {
    let lu = m.clone().lu();
    let inv = lu.try_inverse().ok_or_else(|| Error::Numeric {
        context,
        detail: "singular matrix".into(),
    })?;
    let rcond = 1.0 / (norm1(m) * norm1(&inv));
    if !(rcond >= RCOND_MIN) {
        return Err(Error::Numeric {
            context,
            detail: format!("ill-conditioned matrix (reciprocal condition {rcond:e})"),
        });
    }
    let x = &inv * rhs;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            context,
            detail: "non-finite solution".into(),
        });
    }
    Ok(x)
}

pub fn inverse(m: &Matrix, context: &'static str) -> Result<Matrix> {
    solve(m, &Matrix::identity(m.nrows(), m.ncols()), context)
}

fn norm1(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &Matrix, context: &'static str) -> Result<Matrix> {
    Cholesky::new(symmetrize(m))
        .map(|c| c.l())
        .ok_or_else(|| Error::Numeric {
            context,
            detail: "matrix is not positive definite".into(),
        })
}

pub fn log_det_spd(m: &Matrix, context: &'static str) -> Result<f64> {
    let l = cholesky(m, context)?;
    Ok(2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// `x' M x`.
pub fn quad_form(m: &Matrix, x: &Vector) -> f64 {
    x.dot(&(m * x))
}

/// Builds a `d x d` matrix from row-major entries.
pub fn from_row_major(d: usize, entries: &[f64]) -> Option<Matrix> {
    (entries.len() == d * d).then(|| Matrix::from_row_slice(d, d, entries))
}

pub fn to_row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}
