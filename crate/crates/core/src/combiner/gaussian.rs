//! Wasserstein-2 barycenter of Gaussian approximations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::quantile::pairwise_mean;
use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_pd, sqrt_psd, symmetrize};

pub const BARYCENTER_TOLERANCE: f64 = 1e-10;
pub const BARYCENTER_MAX_ITERS: usize = 500;

/// Mean vector and positive semidefinite covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianApprox {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianApprox {
    /// Checks symmetry to 1e-12 and clips eigenvalues in `[-1e-12, 0)` to zero.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Shape(format!(
                "mean has length {d} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("Gaussian parameters must be finite".into()));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(symmetrize(&cov));
        if eig.eigenvalues.min() < -1e-12 {
            return Err(Error::Domain("covariance has a negative eigenvalue".into()));
        }
        let cov = if eig.eigenvalues.min() < 0.0 {
            let clipped = eig.eigenvalues.map(|l| l.max(0.0));
            symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()))
        } else {
            symmetrize(&cov)
        };
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn is_positive_definite(&self) -> bool {
        self.cov.clone().cholesky().is_some()
    }
}

/// Barycenter together with convergence diagnostics.
#[derive(Clone, Debug)]
pub struct BarycenterFit {
    pub barycenter: GaussianApprox,
    pub iterations: usize,
    /// `‖Σ_j (V^{1/2} V_j V^{1/2})^{1/2} - K V‖_F` at the returned `V`.
    pub residual: f64,
}

/// `Σ_j (V^{1/2} V_j V^{1/2})^{1/2} - K V` and the inner sum.
fn fixed_point_terms(v: &DMatrix<f64>, covs: &[&DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let root = sqrt_psd(v);
    let d = v.nrows();
    let mut sum = DMatrix::zeros(d, d);
    for cov in covs {
        sum += sqrt_psd(&(&root * *cov * &root));
    }
    let residual = &sum - v * covs.len() as f64;
    (sum, residual)
}

/// Fixed-point residual of a candidate barycenter covariance.
pub fn barycenter_residual(v: &DMatrix<f64>, covs: &[&DMatrix<f64>]) -> f64 {
    fixed_point_terms(v, covs).1.norm()
}

/// Gaussian W2 barycenter `N(m*, V*)` with `m*` the mean of the means and
/// `V*` solving `Σ_j (V*^{1/2} V_j V*^{1/2})^{1/2} = K V*`.
pub fn gaussian_barycenter(approxes: &[GaussianApprox]) -> Result<GaussianApprox> {
    gaussian_barycenter_fit(approxes).map(|fit| fit.barycenter)
}

/// Solves for `V*` by the undamped iteration
/// `V ← V^{-1/2} (K⁻¹ Σ_j (V^{1/2} V_j V^{1/2})^{1/2})² V^{-1/2}`,
/// started at the average covariance. The map's fixed points are exactly the
/// solutions of the barycenter equation; iteration stops once the residual
/// drops below 1e-10 (Frobenius) or after 500 steps.
pub fn gaussian_barycenter_fit(approxes: &[GaussianApprox]) -> Result<BarycenterFit> {
    let first = approxes.first().ok_or(Error::EmptyDraws)?;
    let d = first.dim();
    if approxes.iter().any(|a| a.dim() != d) {
        return Err(Error::Shape("Gaussian approximations have different dimensions".into()));
    }
    if !approxes.iter().any(GaussianApprox::is_positive_definite) {
        return Err(Error::SingularMatrix("all subset covariances".into()));
    }
    let k = approxes.len() as f64;
    let mean = DVector::from_fn(d, |i, _| {
        let column: Vec<f64> = approxes.iter().map(|a| a.mean[i]).collect();
        pairwise_mean(&column)
    });
    let covs: Vec<&DMatrix<f64>> = approxes.iter().map(|a| &a.cov).collect();

    let mut v = covs.iter().fold(DMatrix::zeros(d, d), |acc, c| acc + *c) / k;
    let mut residual = f64::INFINITY;
    for iteration in 0..=BARYCENTER_MAX_ITERS {
        let (sum, r) = fixed_point_terms(&v, &covs);
        residual = r.norm();
        if residual < BARYCENTER_TOLERANCE {
            return Ok(BarycenterFit {
                barycenter: GaussianApprox { mean, cov: v },
                iterations: iteration,
                residual,
            });
        }
        if iteration == BARYCENTER_MAX_ITERS || !residual.is_finite() {
            break;
        }
        let inv_root = inv_sqrt_pd(&v, "barycenter iterate")?;
        let avg = sum / k;
        v = symmetrize(&(&inv_root * &avg * &avg * &inv_root));
    }
    Err(Error::ConvergenceFailure {
        iterations: BARYCENTER_MAX_ITERS,
        residual,
    })
}
