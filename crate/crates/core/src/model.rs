//! Data sets, shard partitioning, prior/likelihood specifications and the
//! tempered subset log-posterior.
//!
//! A shard of size `m` out of `n` observations targets
//!
//! ```text
//! log π_m(θ | X_j) = (n / m) · ℓ_j(θ) + log π(θ) + const
//! ```
//!
//! which reduces to `K · ℓ_j(θ) + log π(θ)` for equal shard sizes. Additive
//! constants are fixed per target but otherwise unspecified: the likelihood
//! keeps its data-only terms (such as `-log y!`) and the prior is an
//! unnormalized kernel. Consumers only ever use differences.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{Purpose, StreamKey};
use crate::samplers::DrawMatrix;

/// Responses plus an optional design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    responses: Vec<f64>,
    design: Option<DMatrix<f64>>,
    /// Free-form provenance, e.g. a file path or simulation recipe.
    pub source: String,
}

impl ObservationSet {
    pub fn new(
        responses: Vec<f64>,
        design: Option<DMatrix<f64>>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::InvalidData("observation set needs n >= 1".into()));
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidData("responses must be finite".into()));
        }
        if let Some(z) = &design {
            if z.nrows() != responses.len() {
                return Err(Error::Shape(format!(
                    "design has {} rows but there are {} responses",
                    z.nrows(),
                    responses.len()
                )));
            }
            if z.ncols() == 0 {
                return Err(Error::Shape("design has no columns".into()));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData("design entries must be finite".into()));
            }
        }
        Ok(Self {
            responses,
            design,
            source: source.into(),
        })
    }

    /// Univariate observations without covariates.
    pub fn univariate(responses: Vec<f64>) -> Result<Self> {
        Self::new(responses, None, "in-memory")
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    /// Number of covariates, zero for univariate data.
    pub fn p(&self) -> usize {
        self.design.as_ref().map_or(0, |z| z.ncols())
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn design(&self) -> Option<&DMatrix<f64>> {
        self.design.as_ref()
    }

    /// Rows `indices` of this set, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyShard);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::Shape(format!("index {bad} out of range for n = {}", self.n())));
        }
        let responses = indices.iter().map(|&i| self.responses[i]).collect();
        let design = self.design.as_ref().map(|z| z.select_rows(indices.iter()));
        Ok(Self {
            responses,
            design,
            source: format!("{} (subset of {} rows)", self.source, indices.len()),
        })
    }
}

/// Disjoint assignment of observation indices to `k` shards.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub k: usize,
    /// Shard id for every observation index.
    pub assignments: Vec<usize>,
    pub shard_sizes: Vec<usize>,
}

impl PartitionPlan {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    /// Indices belonging to shard `j`, ascending.
    pub fn shard_indices(&self, j: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == j).then_some(i))
            .collect()
    }

    /// Likelihood power for shard `j`: `n / m_j`, exactly `k` for equal shards.
    pub fn temper(&self, j: usize) -> f64 {
        self.n() as f64 / self.shard_sizes[j] as f64
    }
}

/// Randomly split `0..n` into `k` shards whose sizes differ by at most one.
///
/// A keyed permutation of the indices is dealt round-robin, so the first
/// `n mod k` shards receive `ceil(n / k)` observations.
pub fn partition(n: usize, k: usize, seed: u64) -> Result<PartitionPlan> {
    if k == 0 || k > n {
        return Err(Error::InvalidPartition(format!(
            "need 1 <= K <= n, got K = {k}, n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = StreamKey::new(seed, Purpose::Partition, 0).rng();
    order.shuffle(&mut rng);
    let mut assignments = vec![0; n];
    let mut shard_sizes = vec![0; k];
    for (pos, &idx) in order.iter().enumerate() {
        let shard = pos % k;
        assignments[idx] = shard;
        shard_sizes[shard] += 1;
    }
    Ok(PartitionPlan {
        k,
        assignments,
        shard_sizes,
    })
}

/// Model family identifiers as used in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    PoissonGamma,
    ExponentialGamma,
    BernoulliBeta,
    NormalLinearNig,
    CustomLogdensity,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::PoissonGamma => "poisson-gamma",
            Family::ExponentialGamma => "exponential-gamma",
            Family::BernoulliBeta => "bernoulli-beta",
            Family::NormalLinearNig => "normal-linear-nig",
            Family::CustomLogdensity => "custom-logdensity",
        }
    }

    /// Whether the family has a closed-form posterior.
    pub fn is_conjugate(self) -> bool {
        !matches!(self, Family::CustomLogdensity)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "poisson-gamma" | "poisson" => Family::PoissonGamma,
            "exponential-gamma" | "exponential" => Family::ExponentialGamma,
            "bernoulli-beta" | "bernoulli" => Family::BernoulliBeta,
            "normal-linear-nig" | "normal-linear" => Family::NormalLinearNig,
            "custom-logdensity" => Family::CustomLogdensity,
            other => return Err(Error::Config(format!("unknown model family `{other}`"))),
        })
    }
}

/// Conjugate normal / inverse-gamma prior for the normal linear model:
/// `β | σ² ~ N(μ*, σ² Ω)` and `σ² ~ Inverse-Gamma(a/2, b/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NigPrior {
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
    pub prior_precision: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
}

impl NigPrior {
    pub fn new(prior_mean: DVector<f64>, prior_cov: DMatrix<f64>, a: f64, b: f64) -> Result<Self> {
        let p = prior_mean.len();
        if p == 0 || prior_cov.nrows() != p || prior_cov.ncols() != p {
            return Err(Error::Shape(format!(
                "prior mean has length {p} but Omega is {}x{}",
                prior_cov.nrows(),
                prior_cov.ncols()
            )));
        }
        if (&prior_cov - prior_cov.transpose()).amax() > 1e-12 * prior_cov.amax().max(1.0) {
            return Err(Error::InvalidHyperparameter("Omega must be symmetric".into()));
        }
        let prior_precision = linalg::spd_inverse(&prior_cov, "Omega")
            .map_err(|_| Error::InvalidHyperparameter("Omega must be positive definite".into()))?;
        if !(a > 4.0) || !(b > 0.0) || !b.is_finite() || !a.is_finite() {
            return Err(Error::InvalidHyperparameter(format!(
                "normal-linear prior needs a > 4 and b > 0, got a = {a}, b = {b}"
            )));
        }
        Ok(Self {
            prior_mean,
            prior_cov,
            prior_precision,
            a,
            b,
        })
    }

    /// Zero-mean prior with `Ω = scale · I`.
    pub fn isotropic(p: usize, scale: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(DVector::zeros(p), DMatrix::identity(p, p) * scale, a, b)
    }

    pub fn p(&self) -> usize {
        self.prior_mean.len()
    }
}

pub type LogLikelihoodFn = dyn Fn(&ObservationSet, &[f64]) -> f64 + Send + Sync;
pub type LogPriorFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// User-supplied product likelihood and prior.
#[derive(Clone)]
pub struct CustomModel {
    pub dim: usize,
    /// Log-likelihood of a whole shard; return `-inf` outside the support.
    pub log_likelihood: Arc<LogLikelihoodFn>,
    pub log_prior: Arc<LogPriorFn>,
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel").field("dim", &self.dim).finish_non_exhaustive()
    }
}

/// Likelihood family together with its prior hyperparameters.
#[derive(Clone, Debug)]
pub enum ModelSpec {
    /// Poisson counts, `θ ~ Gamma(shape, rate)`.
    PoissonGamma { shape: f64, rate: f64 },
    /// Exponential waiting times with rate `θ ~ Gamma(shape, rate)`.
    ExponentialGamma { shape: f64, rate: f64 },
    /// Binary outcomes, `θ ~ Beta(alpha, beta)`.
    BernoulliBeta { alpha: f64, beta: f64 },
    /// `y = Zβ + ε`, `θ = (β, σ²)`.
    NormalLinearNig(NigPrior),
    Custom(CustomModel),
}

impl ModelSpec {
    pub fn poisson_gamma(shape: f64, rate: f64) -> Result<Self> {
        check_positive(&[("shape", shape), ("rate", rate)])?;
        Ok(ModelSpec::PoissonGamma { shape, rate })
    }

    pub fn exponential_gamma(shape: f64, rate: f64) -> Result<Self> {
        check_positive(&[("shape", shape), ("rate", rate)])?;
        Ok(ModelSpec::ExponentialGamma { shape, rate })
    }

    pub fn bernoulli_beta(alpha: f64, beta: f64) -> Result<Self> {
        check_positive(&[("alpha", alpha), ("beta", beta)])?;
        Ok(ModelSpec::BernoulliBeta { alpha, beta })
    }

    pub fn family(&self) -> Family {
        match self {
            ModelSpec::PoissonGamma { .. } => Family::PoissonGamma,
            ModelSpec::ExponentialGamma { .. } => Family::ExponentialGamma,
            ModelSpec::BernoulliBeta { .. } => Family::BernoulliBeta,
            ModelSpec::NormalLinearNig(_) => Family::NormalLinearNig,
            ModelSpec::Custom(_) => Family::CustomLogdensity,
        }
    }

    /// Dimension `d` of θ.
    pub fn parameter_dim(&self) -> usize {
        match self {
            ModelSpec::NormalLinearNig(prior) => prior.p() + 1,
            ModelSpec::Custom(c) => c.dim,
            _ => 1,
        }
    }

    /// Re-check hyperparameter constraints (useful for specs built by hand).
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::PoissonGamma { shape, rate } | ModelSpec::ExponentialGamma { shape, rate } => {
                check_positive(&[("shape", *shape), ("rate", *rate)])
            }
            ModelSpec::BernoulliBeta { alpha, beta } => {
                check_positive(&[("alpha", *alpha), ("beta", *beta)])
            }
            ModelSpec::NormalLinearNig(prior) => NigPrior::new(
                prior.prior_mean.clone(),
                prior.prior_cov.clone(),
                prior.a,
                prior.b,
            )
            .map(|_| ()),
            ModelSpec::Custom(c) if c.dim == 0 => {
                Err(Error::InvalidHyperparameter("custom model needs dim >= 1".into()))
            }
            ModelSpec::Custom(_) => Ok(()),
        }
    }

    /// Unnormalized log prior density; `-inf` outside the support.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        match self {
            ModelSpec::PoissonGamma { shape, rate } | ModelSpec::ExponentialGamma { shape, rate } => {
                let t = theta[0];
                if t > 0.0 {
                    (shape - 1.0) * t.ln() - rate * t
                } else {
                    f64::NEG_INFINITY
                }
            }
            ModelSpec::BernoulliBeta { alpha, beta } => {
                let t = theta[0];
                if t > 0.0 && t < 1.0 {
                    (alpha - 1.0) * t.ln() + (beta - 1.0) * (1.0 - t).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ModelSpec::NormalLinearNig(prior) => {
                let p = prior.p();
                let sigma2 = theta[p];
                if !(sigma2 > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let diff = DVector::from_column_slice(&theta[..p]) - &prior.prior_mean;
                let quad = diff.dot(&(&prior.prior_precision * &diff));
                -(p as f64 / 2.0 + prior.a / 2.0 + 1.0) * sigma2.ln() - (quad + prior.b) / (2.0 * sigma2)
            }
            ModelSpec::Custom(c) => (c.log_prior)(theta),
        }
    }
}

fn check_positive(params: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in params {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Per-family sufficient statistics of one shard.
#[derive(Clone, Debug)]
enum ShardStats {
    Counts { m: f64, sum: f64, sum_log_factorial: f64 },
    Positive { m: f64, sum: f64 },
    Binary { m: f64, ones: f64 },
    Linear { m: f64, ztz: DMatrix<f64>, zty: DVector<f64>, yty: f64 },
    Raw,
}

/// Subset posterior with the shard likelihood raised to `temper`.
#[derive(Clone, Debug)]
pub struct TemperedTarget {
    model: ModelSpec,
    data: ObservationSet,
    temper: f64,
    stats: ShardStats,
}

impl TemperedTarget {
    /// Validates the data against the family's sample space.
    pub fn new(model: ModelSpec, data: ObservationSet, temper: f64) -> Result<Self> {
        model.validate()?;
        if !(temper >= 1.0) || !temper.is_finite() {
            return Err(Error::Config(format!("temper must be finite and >= 1, got {temper}")));
        }
        let y = data.responses();
        let m = y.len() as f64;
        let stats = match &model {
            ModelSpec::PoissonGamma { .. } => {
                if y.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::InvalidData("Poisson responses must be nonnegative integers".into()));
                }
                ShardStats::Counts {
                    m,
                    sum: y.iter().sum(),
                    sum_log_factorial: y.iter().map(|&v| ln_gamma(v + 1.0)).sum(),
                }
            }
            ModelSpec::ExponentialGamma { .. } => {
                if y.iter().any(|&v| v <= 0.0) {
                    return Err(Error::InvalidData("exponential responses must be positive".into()));
                }
                ShardStats::Positive { m, sum: y.iter().sum() }
            }
            ModelSpec::BernoulliBeta { .. } => {
                if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidData("Bernoulli responses must be 0 or 1".into()));
                }
                ShardStats::Binary { m, ones: y.iter().sum() }
            }
            ModelSpec::NormalLinearNig(prior) => {
                let z = data
                    .design()
                    .ok_or_else(|| Error::InvalidData("normal-linear model needs a design matrix".into()))?;
                if z.ncols() != prior.p() {
                    return Err(Error::Shape(format!(
                        "design has {} columns but the prior has dimension {}",
                        z.ncols(),
                        prior.p()
                    )));
                }
                let yv = DVector::from_column_slice(y);
                ShardStats::Linear {
                    m,
                    ztz: z.transpose() * z,
                    zty: z.transpose() * &yv,
                    yty: yv.dot(&yv),
                }
            }
            ModelSpec::Custom(_) => ShardStats::Raw,
        };
        Ok(Self {
            model,
            data,
            temper,
            stats,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn data(&self) -> &ObservationSet {
        &self.data
    }

    pub fn temper(&self) -> f64 {
        self.temper
    }

    pub fn dim(&self) -> usize {
        self.model.parameter_dim()
    }

    /// Untempered shard log-likelihood; `-inf` outside the support.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        match (&self.stats, &self.model) {
            (ShardStats::Counts { m, sum, sum_log_factorial }, _) => {
                let t = theta[0];
                if t > 0.0 {
                    sum * t.ln() - m * t - sum_log_factorial
                } else {
                    f64::NEG_INFINITY
                }
            }
            (ShardStats::Positive { m, sum }, _) => {
                let t = theta[0];
                if t > 0.0 {
                    m * t.ln() - t * sum
                } else {
                    f64::NEG_INFINITY
                }
            }
            (ShardStats::Binary { m, ones }, _) => {
                let t = theta[0];
                if t > 0.0 && t < 1.0 {
                    ones * t.ln() + (m - ones) * (1.0 - t).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            (ShardStats::Linear { m, ztz, zty, yty }, _) => {
                let p = zty.len();
                let sigma2 = theta[p];
                if !(sigma2 > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let beta = DVector::from_column_slice(&theta[..p]);
                let rss = yty - 2.0 * beta.dot(zty) + beta.dot(&(ztz * &beta));
                -0.5 * m * (2.0 * std::f64::consts::PI * sigma2).ln() - rss / (2.0 * sigma2)
            }
            (ShardStats::Raw, ModelSpec::Custom(c)) => (c.log_likelihood)(&self.data, theta),
            (ShardStats::Raw, _) => unreachable!("raw statistics only back custom models"),
        }
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        self.model.log_prior(theta)
    }

    /// `temper · ℓ_j(θ) + log π(θ)`; `-inf` when θ is outside the support.
    ///
    /// Panics if `theta` does not have the model's dimension.
    pub fn tempered_log_density(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.dim(), "parameter has the wrong dimension");
        let lp = self.log_prior(theta);
        if lp == f64::NEG_INFINITY || lp.is_nan() {
            return f64::NEG_INFINITY;
        }
        let ll = self.log_likelihood(theta);
        if ll == f64::NEG_INFINITY || ll.is_nan() {
            return f64::NEG_INFINITY;
        }
        self.temper * ll + lp
    }

    /// Starting point for a chain: the shard MLE when it lies inside the
    /// support, otherwise the prior mean.
    pub fn initial_point(&self) -> Vec<f64> {
        match (&self.stats, &self.model) {
            (ShardStats::Counts { m, sum, .. }, ModelSpec::PoissonGamma { shape, rate }) => {
                vec![if *sum > 0.0 { sum / m } else { shape / rate }]
            }
            (ShardStats::Positive { m, sum }, _) => vec![m / sum],
            (ShardStats::Binary { m, ones }, ModelSpec::BernoulliBeta { alpha, beta }) => {
                if *ones > 0.0 && ones < m {
                    vec![ones / m]
                } else {
                    vec![alpha / (alpha + beta)]
                }
            }
            (ShardStats::Linear { m, ztz, zty, yty }, ModelSpec::NormalLinearNig(prior)) => {
                let p = zty.len();
                match ztz.clone().cholesky() {
                    Some(chol) if *m > p as f64 => {
                        let beta = chol.solve(zty);
                        let rss = yty - 2.0 * beta.dot(zty) + beta.dot(&(ztz * &beta));
                        let sigma2 = (rss / m).max(f64::MIN_POSITIVE);
                        beta.iter().copied().chain(std::iter::once(sigma2)).collect()
                    }
                    _ => {
                        // prior mean of σ² is b / (a - 2) for Inverse-Gamma(a/2, b/2)
                        let sigma2 = prior.b / (prior.a - 2.0);
                        prior.prior_mean.iter().copied().chain(std::iter::once(sigma2)).collect()
                    }
                }
            }
            _ => vec![0.0; self.dim()],
        }
    }
}

/// Scalar functional `ξ = aᵀθ + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFunctional {
    pub a: Vec<f64>,
    pub b: f64,
}

impl LinearFunctional {
    pub fn new(a: Vec<f64>, b: f64) -> Result<Self> {
        if a.iter().all(|&v| v == 0.0) {
            return Err(Error::Config("functional needs at least one nonzero coefficient".into()));
        }
        if a.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::Config("functional coefficients must be finite".into()));
        }
        Ok(Self { a, b })
    }

    /// Projection onto coordinate `i` of a `d`-dimensional parameter.
    pub fn coordinate(i: usize, d: usize) -> Self {
        let mut a = vec![0.0; d];
        a[i] = 1.0;
        Self { a, b: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn evaluate(&self, theta: &[f64]) -> f64 {
        self.a.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>() + self.b
    }
}

/// `ξ_t = aᵀθ_t + b` for every draw.
pub fn apply_functional(f: &LinearFunctional, draws: &DrawMatrix) -> Result<Vec<f64>> {
    if f.dim() != draws.d() {
        return Err(Error::Shape(format!(
            "functional has length {} but draws have {} columns",
            f.dim(),
            draws.d()
        )));
    }
    let values = draws.values();
    Ok((0..draws.t())
        .map(|t| {
            let mut acc = f.b;
            for (j, a) in f.a.iter().enumerate() {
                acc += a * values[(t, j)];
            }
            acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn poisson_target(y: &[f64], temper: f64) -> TemperedTarget {
        TemperedTarget::new(
            ModelSpec::poisson_gamma(1.0, 1.0).unwrap(),
            ObservationSet::univariate(y.to_vec()).unwrap(),
            temper,
        )
        .unwrap()
    }

    #[test]
    fn partition_small_cases() {
        let plan = partition(6, 3, 7).unwrap();
        assert_eq!(plan.shard_sizes, vec![2, 2, 2]);
        let mut all: Vec<usize> = (0..3).flat_map(|j| plan.shard_indices(j)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());

        assert_eq!(partition(7, 3, 1).unwrap().shard_sizes, vec![3, 2, 2]);
        assert!(partition(10_000, 10, 0).unwrap().shard_sizes.iter().all(|&s| s == 1000));
    }

    #[test]
    fn partition_rejects_bad_k() {
        assert!(matches!(partition(5, 0, 1), Err(Error::InvalidPartition(_))));
        assert!(matches!(partition(5, 6, 1), Err(Error::InvalidPartition(_))));
        assert!(partition(5, 5, 1).is_ok());
    }

    #[test]
    fn temper_for_unequal_shards() {
        let plan = partition(7, 3, 1).unwrap();
        assert_relative_eq!(plan.temper(0), 7.0 / 3.0);
        assert_relative_eq!(plan.temper(2), 3.5);
        let equal = partition(9, 3, 1).unwrap();
        assert_eq!(equal.temper(1), 3.0);
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_cover(n in 1usize..300, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let plan = partition(n, k, seed).unwrap();
            prop_assert_eq!(plan.shard_sizes.iter().sum::<usize>(), n);
            let max = *plan.shard_sizes.iter().max().unwrap();
            let min = *plan.shard_sizes.iter().min().unwrap();
            prop_assert!(max - min <= 1);
            let mut seen = vec![false; n];
            for j in 0..k {
                for i in plan.shard_indices(j) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            prop_assert_eq!(plan, partition(n, k, seed).unwrap());
        }

        #[test]
        fn tempered_density_matches_direct_sum(
            y in proptest::collection::vec(0u32..20, 1..40),
            k in 1u32..12,
            theta in 0.01f64..15.0,
        ) {
            let ys: Vec<f64> = y.iter().map(|&v| v as f64).collect();
            let target = poisson_target(&ys, k as f64);
            let direct: f64 = ys
                .iter()
                .map(|&v| {
                    let log_fact: f64 = (1..=v as u64).map(|i| (i as f64).ln()).sum();
                    v * theta.ln() - theta - log_fact
                })
                .sum();
            let prior = -theta;
            let got = target.tempered_log_density(&[theta]);
            prop_assert!((got - (k as f64 * direct + prior)).abs() < 1e-9 * got.abs().max(1.0));
        }

        #[test]
        fn temper_enters_linearly(theta in 0.05f64..10.0, c in 1.0f64..6.0) {
            let y = [4.0, 0.0, 7.0, 2.0];
            let single = poisson_target(&y, c);
            let double = poisson_target(&y, 2.0 * c);
            let lp = single.log_prior(&[theta]);
            let lhs = double.tempered_log_density(&[theta]) - lp;
            let rhs = 2.0 * (single.tempered_log_density(&[theta]) - lp);
            prop_assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn poisson_tempered_value() {
        let target = poisson_target(&[1.0, 2.0, 3.0], 2.0);
        assert_relative_eq!(target.tempered_log_density(&[1.0]), -11.969_813_299_576, epsilon = 1e-10);
    }

    #[test]
    fn temper_one_is_plain_posterior_kernel() {
        let target = poisson_target(&[1.0, 2.0, 3.0], 1.0);
        let theta: f64 = 2.5;
        let expected = 6.0 * theta.ln() - 3.0 * theta - 12f64.ln() - theta;
        assert_relative_eq!(target.tempered_log_density(&[theta]), expected, epsilon = 1e-12);
    }

    #[test]
    fn support_violations_are_negative_infinity() {
        let target = poisson_target(&[1.0], 1.0);
        assert_eq!(target.tempered_log_density(&[0.0]), f64::NEG_INFINITY);
        assert_eq!(target.tempered_log_density(&[-1.0]), f64::NEG_INFINITY);
        let bern = TemperedTarget::new(
            ModelSpec::bernoulli_beta(1.0, 1.0).unwrap(),
            ObservationSet::univariate(vec![1.0, 0.0]).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!(bern.tempered_log_density(&[1.0]), f64::NEG_INFINITY);
        assert!(bern.tempered_log_density(&[0.5]).is_finite());
    }

    #[test]
    fn data_is_checked_against_family() {
        let bad = ObservationSet::univariate(vec![1.5]).unwrap();
        assert!(TemperedTarget::new(ModelSpec::poisson_gamma(1.0, 1.0).unwrap(), bad, 1.0).is_err());
        let neg = ObservationSet::univariate(vec![-1.0]).unwrap();
        assert!(TemperedTarget::new(ModelSpec::exponential_gamma(1.0, 1.0).unwrap(), neg, 1.0).is_err());
        let ok = ObservationSet::univariate(vec![1.0]).unwrap();
        assert!(TemperedTarget::new(ModelSpec::poisson_gamma(1.0, 1.0).unwrap(), ok, 0.5).is_err());
    }

    #[test]
    fn hyperparameter_constraints() {
        assert!(ModelSpec::poisson_gamma(0.0, 1.0).is_err());
        assert!(ModelSpec::bernoulli_beta(1.0, -2.0).is_err());
        assert!(NigPrior::isotropic(2, 1.0, 4.0, 1.0).is_err());
        assert!(NigPrior::isotropic(2, 1.0, 5.0, 1.0).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(NigPrior::new(DVector::zeros(2), asym, 5.0, 1.0).is_err());
    }

    #[test]
    fn normal_linear_density_matches_direct_evaluation() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 1.0, 1.0, -1.0, 1.0]);
        let y = vec![0.5, 2.0, -1.0];
        let data = ObservationSet::new(y.clone(), Some(z.clone()), "test").unwrap();
        let prior = NigPrior::isotropic(2, 2.0, 6.0, 3.0).unwrap();
        let target = TemperedTarget::new(ModelSpec::NormalLinearNig(prior), data, 2.0).unwrap();
        let theta = [0.3, 0.7, 1.4];
        let s2: f64 = theta[2];
        let rss: f64 = (0..3)
            .map(|i| (y[i] - z[(i, 0)] * theta[0] - z[(i, 1)] * theta[1]).powi(2))
            .sum();
        let ll = -1.5 * (2.0 * std::f64::consts::PI * s2).ln() - rss / (2.0 * s2);
        let quad = (theta[0] * theta[0] + theta[1] * theta[1]) / 2.0;
        let lp = -(1.0 + 3.0 + 1.0) * s2.ln() - (quad + 3.0) / (2.0 * s2);
        assert_relative_eq!(target.tempered_log_density(&theta), 2.0 * ll + lp, epsilon = 1e-12);
        assert_eq!(target.tempered_log_density(&[0.0, 0.0, -1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn initial_points_are_in_support() {
        let t = poisson_target(&[0.0, 0.0], 1.0);
        assert_eq!(t.initial_point(), vec![1.0]);
        let t = poisson_target(&[2.0, 4.0], 1.0);
        assert_eq!(t.initial_point(), vec![3.0]);
    }

    #[test]
    fn functional_examples() {
        let draws = DrawMatrix::from_rows(&[vec![3.0, 5.0]], None, 0).unwrap();
        let f = LinearFunctional::new(vec![0.0, 2.0], 1.0).unwrap();
        assert_eq!(apply_functional(&f, &draws).unwrap(), vec![11.0]);

        let eye = DrawMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], None, 0).unwrap();
        let sum = LinearFunctional::new(vec![1.0, 1.0], 0.0).unwrap();
        assert_eq!(apply_functional(&sum, &eye).unwrap(), vec![1.0, 1.0]);

        let first = LinearFunctional::coordinate(0, 2);
        let rows = DrawMatrix::from_rows(&[vec![1.5, 9.0], vec![-2.0, 4.0]], None, 0).unwrap();
        assert_eq!(apply_functional(&first, &rows).unwrap(), vec![1.5, -2.0]);

        assert!(matches!(apply_functional(&LinearFunctional::coordinate(0, 3), &rows), Err(Error::Shape(_))));
        assert!(LinearFunctional::new(vec![0.0, 0.0], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn functional_commutes_with_row_permutation(
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), 2..20),
            a in proptest::collection::vec(0.1f64..3.0, 3),
            b in -5.0f64..5.0,
            seed in any::<u64>(),
        ) {
            let f = LinearFunctional::new(a, b).unwrap();
            let mut perm: Vec<usize> = (0..rows.len()).collect();
            perm.shuffle(&mut StreamKey::new(seed, Purpose::Partition, 9).rng());
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
            let base = apply_functional(&f, &DrawMatrix::from_rows(&rows, None, 0).unwrap()).unwrap();
            let moved = apply_functional(&f, &DrawMatrix::from_rows(&permuted, None, 0).unwrap()).unwrap();
            for (i, &p) in perm.iter().enumerate() {
                prop_assert_eq!(moved[i], base[p]);
            }
        }
    }
}
