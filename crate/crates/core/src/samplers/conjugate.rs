//! Exact tempered posteriors for the conjugate families.
//!
//! With the shard likelihood raised to `temper` (written `K` below):
//!
//! | family              | subset posterior                              |
//! |---------------------|-----------------------------------------------|
//! | Poisson / Gamma     | `Gamma(K Σy + a, K m + b)`                     |
//! | Exponential / Gamma | `Gamma(K m + a, K Σy + b)`                     |
//! | Bernoulli / Beta    | `Beta(K Σy + a, K Σ(1 - y) + b)`               |
//! | Normal linear / NIG | `σ² ~ IG((a + K m)/2, b*/2)`, `β | σ² ~ N(β*, σ² P⁻¹)` |
//!
//! where `P = K ZᵀZ + Ω⁻¹`, `β* = P⁻¹(K Zᵀy + Ω⁻¹μ*)` and
//! `b* = b + μ*ᵀΩ⁻¹μ* + K yᵀy - β*ᵀ P β*`. Gamma rates are rates, not scales.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use statrs::distribution::{
    Beta as BetaDist, ContinuousCDF, Gamma as GammaDist, StudentsT,
};

use super::DrawMatrix;
use crate::error::{Error, Result};
use crate::linalg::{spd_cholesky, symmetrize};
use crate::model::{LinearFunctional, ModelSpec, NigPrior, TemperedTarget};
use crate::rng::{Purpose, StreamKey};

/// Closed-form posterior of one (tempered) conjugate target.
#[derive(Clone, Debug)]
pub enum ConjugatePosterior {
    Gamma {
        shape: f64,
        rate: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    NormalInverseGamma {
        /// `β*`
        mean: DVector<f64>,
        /// `P = K ZᵀZ + Ω⁻¹`
        precision: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
        /// `a + K m`
        dof: f64,
        /// `b*`
        b_star: f64,
    },
}

fn check_temper(temper: f64) -> Result<()> {
    if temper >= 1.0 && temper.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("temper must be finite and >= 1, got {temper}")))
    }
}

fn check_hyper(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidHyperparameter(format!(
            "hyperparameters must be positive, got a = {a}, b = {b}"
        )))
    }
}

impl ConjugatePosterior {
    pub fn poisson_gamma(y: &[f64], temper: f64, shape: f64, rate: f64) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyShard);
        }
        check_hyper(shape, rate)?;
        check_temper(temper)?;
        if y.iter().any(|&v| !(v >= 0.0) || v.fract() != 0.0) {
            return Err(Error::InvalidData("Poisson responses must be nonnegative integers".into()));
        }
        let sum: f64 = y.iter().sum();
        Ok(Self::Gamma {
            shape: temper * sum + shape,
            rate: temper * y.len() as f64 + rate,
        })
    }

    pub fn exponential_gamma(y: &[f64], temper: f64, shape: f64, rate: f64) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyShard);
        }
        check_hyper(shape, rate)?;
        check_temper(temper)?;
        if y.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidData("exponential responses must be positive".into()));
        }
        let sum: f64 = y.iter().sum();
        Ok(Self::Gamma {
            shape: temper * y.len() as f64 + shape,
            rate: temper * sum + rate,
        })
    }

    pub fn bernoulli_beta(y: &[f64], temper: f64, alpha: f64, beta: f64) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyShard);
        }
        check_hyper(alpha, beta)?;
        check_temper(temper)?;
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData("Bernoulli responses must be 0 or 1".into()));
        }
        let ones: f64 = y.iter().sum();
        let zeros = y.len() as f64 - ones;
        Ok(Self::Beta {
            alpha: temper * ones + alpha,
            beta: temper * zeros + beta,
        })
    }

    pub fn normal_linear(y: &[f64], z: &DMatrix<f64>, temper: f64, prior: &NigPrior) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyShard);
        }
        check_temper(temper)?;
        if z.nrows() != y.len() || z.ncols() != prior.p() {
            return Err(Error::Shape(format!(
                "design is {}x{}, expected {}x{}",
                z.nrows(),
                z.ncols(),
                y.len(),
                prior.p()
            )));
        }
        let yv = DVector::from_column_slice(y);
        let precision = z.transpose() * z * temper + &prior.prior_precision;
        let precision = symmetrize(&precision);
        let chol = spd_cholesky(&precision, "temper * Z'Z + inv(Omega)")?;
        let rhs = z.transpose() * &yv * temper + &prior.prior_precision * &prior.prior_mean;
        let mean = chol.solve(&rhs);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix("temper * Z'Z + inv(Omega)".into()));
        }
        let b_star = prior.b
            + prior.prior_mean.dot(&(&prior.prior_precision * &prior.prior_mean))
            + temper * yv.dot(&yv)
            - mean.dot(&(&precision * &mean));
        // b* >= b > 0 in exact arithmetic; cancellation can only eat into the yᵀy term
        let b_star = b_star.max(prior.b);
        Ok(Self::NormalInverseGamma {
            mean,
            precision,
            chol,
            dof: prior.a + temper * y.len() as f64,
            b_star,
        })
    }

    /// Posterior of a conjugate tempered target.
    pub fn from_target(target: &TemperedTarget) -> Result<Self> {
        let y = target.data().responses();
        let temper = target.temper();
        match target.model() {
            ModelSpec::PoissonGamma { shape, rate } => Self::poisson_gamma(y, temper, *shape, *rate),
            ModelSpec::ExponentialGamma { shape, rate } => {
                Self::exponential_gamma(y, temper, *shape, *rate)
            }
            ModelSpec::BernoulliBeta { alpha, beta } => Self::bernoulli_beta(y, temper, *alpha, *beta),
            ModelSpec::NormalLinearNig(prior) => {
                let z = target
                    .data()
                    .design()
                    .ok_or_else(|| Error::InvalidData("normal-linear model needs a design matrix".into()))?;
                Self::normal_linear(y, z, temper, prior)
            }
            ModelSpec::Custom(_) => Err(Error::Config(
                "custom log-densities have no closed-form posterior".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::NormalInverseGamma { mean, .. } => mean.len() + 1,
            _ => 1,
        }
    }

    /// Posterior mean of θ (for the linear model: `(β*, E σ²)`).
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::Gamma { shape, rate } => vec![shape / rate],
            Self::Beta { alpha, beta } => vec![alpha / (alpha + beta)],
            Self::NormalInverseGamma { mean, dof, b_star, .. } => {
                let sigma2 = if *dof > 2.0 { b_star / (dof - 2.0) } else { f64::INFINITY };
                mean.iter().copied().chain(std::iter::once(sigma2)).collect()
            }
        }
    }

    /// Posterior variance of each coordinate of θ.
    pub fn variances(&self) -> Vec<f64> {
        match self {
            Self::Gamma { shape, rate } => vec![shape / (rate * rate)],
            Self::Beta { alpha, beta } => {
                let s = alpha + beta;
                vec![alpha * beta / (s * s * (s + 1.0))]
            }
            Self::NormalInverseGamma { .. } => {
                let cov = self.beta_covariance().expect("normal-inverse-gamma variant");
                let mut out: Vec<f64> = cov.diagonal().iter().copied().collect();
                out.push(self.sigma2_variance().expect("normal-inverse-gamma variant"));
                out
            }
        }
    }

    /// Marginal covariance of β, `b* / (a + K m - 2) · P⁻¹`.
    pub fn beta_covariance(&self) -> Option<DMatrix<f64>> {
        match self {
            Self::NormalInverseGamma { chol, dof, b_star, .. } => {
                let scale = if *dof > 2.0 { b_star / (dof - 2.0) } else { f64::INFINITY };
                Some(chol.inverse() * scale)
            }
            _ => None,
        }
    }

    fn sigma2_variance(&self) -> Option<f64> {
        match self {
            Self::NormalInverseGamma { dof, b_star, .. } => {
                let (shape, scale) = (dof / 2.0, b_star / 2.0);
                Some(if shape > 2.0 {
                    scale * scale / ((shape - 1.0).powi(2) * (shape - 2.0))
                } else {
                    f64::INFINITY
                })
            }
            _ => None,
        }
    }

    /// Exact quantile of `ξ = aᵀθ + b` when its distribution is available in
    /// closed form: any functional of a scalar family, and for the linear
    /// model functionals of β alone (Student t) or of σ² alone.
    pub fn functional_quantile(&self, f: &LinearFunctional, u: f64) -> Option<f64> {
        if f.dim() != self.dim() || !(u > 0.0 && u < 1.0) {
            return None;
        }
        match self {
            Self::Gamma { .. } | Self::Beta { .. } => {
                let slope = f.a[0];
                let q = if slope > 0.0 {
                    self.scalar_quantile(u)
                } else {
                    self.scalar_quantile(1.0 - u)
                };
                Some(slope * q + f.b)
            }
            Self::NormalInverseGamma { mean, chol, dof, b_star, .. } => {
                let p = mean.len();
                let a_beta = DVector::from_column_slice(&f.a[..p]);
                let a_sigma = f.a[p];
                if a_sigma == 0.0 {
                    let location = a_beta.dot(mean) + f.b;
                    let spread = a_beta.dot(&chol.solve(&a_beta)) * b_star / dof;
                    let t = StudentsT::new(location, spread.sqrt(), *dof).ok()?;
                    Some(t.inverse_cdf(u))
                } else if a_beta.iter().all(|&v| v == 0.0) {
                    // σ² = 1 / g with g ~ Gamma(dof/2, rate b*/2)
                    let g = GammaDist::new(dof / 2.0, b_star / 2.0).ok()?;
                    let inv = |v: f64| 1.0 / g.inverse_cdf(1.0 - v);
                    let q = if a_sigma > 0.0 { inv(u) } else { inv(1.0 - u) };
                    Some(a_sigma * q + f.b)
                } else {
                    None
                }
            }
        }
    }

    fn scalar_quantile(&self, u: f64) -> f64 {
        match self {
            Self::Gamma { shape, rate } => GammaDist::new(*shape, *rate)
                .expect("validated gamma parameters")
                .inverse_cdf(u),
            Self::Beta { alpha, beta } => BetaDist::new(*alpha, *beta)
                .expect("validated beta parameters")
                .inverse_cdf(u),
            Self::NormalInverseGamma { .. } => unreachable!("not a scalar family"),
        }
    }

    /// `t` independent exact draws from the stream `key`.
    pub fn sample(&self, t: usize, key: StreamKey) -> Result<DrawMatrix> {
        if t == 0 {
            return Err(Error::Config("number of draws must be at least 1".into()));
        }
        let mut rng = key.rng();
        let values = match self {
            Self::Gamma { shape, rate } => {
                let dist = Gamma::new(*shape, 1.0 / rate)
                    .map_err(|e| Error::InvalidHyperparameter(e.to_string()))?;
                DMatrix::from_iterator(t, 1, (0..t).map(|_| dist.sample(&mut rng)))
            }
            Self::Beta { alpha, beta } => {
                let dist = Beta::new(*alpha, *beta).map_err(|e| Error::InvalidHyperparameter(e.to_string()))?;
                DMatrix::from_iterator(t, 1, (0..t).map(|_| dist.sample(&mut rng)))
            }
            Self::NormalInverseGamma { mean, chol, dof, b_star, .. } => {
                let p = mean.len();
                let precision_gamma = Gamma::new(dof / 2.0, 2.0 / b_star)
                    .map_err(|e| Error::InvalidHyperparameter(e.to_string()))?;
                let upper = chol.l().transpose();
                let mut values = DMatrix::zeros(t, p + 1);
                for row in 0..t {
                    let sigma2 = 1.0 / precision_gamma.sample(&mut rng);
                    let noise = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
                    // Lᵀ x = z gives x ~ N(0, P⁻¹)
                    let offset = upper
                        .solve_upper_triangular(&noise)
                        .ok_or_else(|| Error::SingularMatrix("temper * Z'Z + inv(Omega)".into()))?;
                    let sd = sigma2.sqrt();
                    for j in 0..p {
                        values[(row, j)] = mean[j] + sd * offset[j];
                    }
                    values[(row, p)] = sigma2;
                }
                values
            }
        };
        let shard_id = (key.purpose == Purpose::Shard).then_some(key.index as usize);
        DrawMatrix::new(values, shard_id, key.seed)
    }
}

/// Exact draws from `Gamma(temper·Σy + a, temper·m + b)`.
pub fn sample_poisson_gamma(
    shard_y: &[f64],
    temper: f64,
    a: f64,
    b: f64,
    t: usize,
    key: StreamKey,
) -> Result<DrawMatrix> {
    ConjugatePosterior::poisson_gamma(shard_y, temper, a, b)?.sample(t, key)
}

/// Exact draws from `Gamma(temper·m + a, temper·Σy + b)`.
pub fn sample_exponential_gamma(
    shard_y: &[f64],
    temper: f64,
    a: f64,
    b: f64,
    t: usize,
    key: StreamKey,
) -> Result<DrawMatrix> {
    ConjugatePosterior::exponential_gamma(shard_y, temper, a, b)?.sample(t, key)
}

/// Exact draws from `Beta(temper·Σy + a, temper·Σ(1 - y) + b)`.
pub fn sample_bernoulli_beta(
    shard_y: &[f64],
    temper: f64,
    a: f64,
    b: f64,
    t: usize,
    key: StreamKey,
) -> Result<DrawMatrix> {
    ConjugatePosterior::bernoulli_beta(shard_y, temper, a, b)?.sample(t, key)
}

/// Exact draws of `(β, σ²)`; columns are `β_1..β_p, σ²`.
pub fn sample_normal_linear_nig(
    y: &[f64],
    z: &DMatrix<f64>,
    temper: f64,
    prior: &NigPrior,
    t: usize,
    key: StreamKey,
) -> Result<DrawMatrix> {
    ConjugatePosterior::normal_linear(y, z, temper, prior)?.sample(t, key)
}

/// Exact draws for any conjugate target.
pub fn sample_exact(target: &TemperedTarget, t: usize, key: StreamKey) -> Result<DrawMatrix> {
    ConjugatePosterior::from_target(target)?.sample(t, key)
}
