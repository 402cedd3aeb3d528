//! Small dense linear algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative ridge added to a singular sample covariance before inverting.
pub const RIDGE_FACTOR: f64 = 1e-8;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Apply `f` to the eigenvalues of a symmetric matrix, flooring them at zero first.
fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mapped = eig.eigenvalues.map(|l| f(l.max(0.0)));
    let q = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * mapped[j]);
    symmetrize(&(scaled * q.transpose()))
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, f64::sqrt)
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn inv_sqrt_pd(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&l| l <= max * f64::EPSILON || !l.is_finite()) {
        return Err(Error::SingularMatrix(name.to_string()));
    }
    Ok(spectral_map(m, |l| 1.0 / l.sqrt()))
}

/// Cholesky factor of a symmetric matrix, rejecting matrices whose pivots
/// fall to rounding level relative to the largest diagonal entry.
pub fn spd_cholesky(m: &DMatrix<f64>, name: &str) -> Result<Cholesky<f64, Dyn>> {
    let singular = || Error::SingularMatrix(name.to_string());
    let sym = symmetrize(m);
    let scale = sym.diagonal().amax();
    let chol = sym.cholesky().ok_or_else(singular)?;
    let floor = scale * f64::EPSILON * 64.0 * m.nrows() as f64;
    if chol.l_dirty().diagonal().iter().all(|l| l * l > floor) {
        Ok(chol)
    } else {
        Err(singular())
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let chol = spd_cholesky(m, name)?;
    let inv = chol.inverse();
    if inv.iter().all(|v| v.is_finite()) {
        Ok(symmetrize(&inv))
    } else {
        Err(Error::SingularMatrix(name.to_string()))
    }
}

/// Inverse of a covariance estimate, retrying once with a ridge of
/// `RIDGE_FACTOR * trace / d` on the diagonal.
pub fn ridge_inverse(cov: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    match spd_inverse(cov, name) {
        Ok(inv) => Ok(inv),
        Err(_) => {
            let d = cov.nrows();
            let ridge = RIDGE_FACTOR * cov.trace() / d as f64;
            if !(ridge > 0.0) {
                return Err(Error::SingularMatrix(name.to_string()));
            }
            let bumped = cov + DMatrix::identity(d, d) * ridge;
            spd_inverse(&bumped, name)
        }
    }
}

/// Column means and sample covariance (denominator `T - 1`) of the rows of `x`.
pub fn mean_cov(x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let t = x.nrows();
    if t < 2 {
        return Err(Error::InsufficientDraws { needed: 2, got: t });
    }
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (t - 1) as f64;
    Ok((mean, symmetrize(&cov)))
}
