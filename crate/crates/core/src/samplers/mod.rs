//! Posterior draws for each tempered subset posterior.
//!
//! Conjugate families are sampled exactly from their closed-form posteriors;
//! anything else goes through random-walk Metropolis.

mod conjugate;
mod metropolis;

pub use conjugate::{
    sample_bernoulli_beta, sample_exact, sample_exponential_gamma, sample_normal_linear_nig,
    sample_poisson_gamma, ConjugatePosterior,
};
pub use metropolis::{run_metropolis, sample_metropolis, ChainRun};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `T × d` matrix of posterior draws, one draw per row.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawMatrix {
    values: DMatrix<f64>,
    pub shard_id: Option<usize>,
    pub seed_used: u64,
}

impl DrawMatrix {
    pub fn new(values: DMatrix<f64>, shard_id: Option<usize>, seed_used: u64) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyDraws);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("draws must be finite".into()));
        }
        Ok(Self {
            values,
            shard_id,
            seed_used,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], shard_id: Option<usize>, seed_used: u64) -> Result<Self> {
        let d = rows.first().ok_or(Error::EmptyDraws)?.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("draw rows have unequal lengths".into()));
        }
        let values = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(values, shard_id, seed_used)
    }

    /// Single-column draws.
    pub fn from_column(column: &[f64], shard_id: Option<usize>, seed_used: u64) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(column.len(), 1, column), shard_id, seed_used)
    }

    /// Number of draws.
    pub fn t(&self) -> usize {
        self.values.nrows()
    }

    /// Parameter dimension.
    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.values.row(t).iter().copied().collect()
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

/// Random-walk proposal scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalScale {
    /// Tune toward a target acceptance rate before the retained phase, then
    /// freeze.
    Auto,
    Fixed(f64),
}

/// Chain length and post-processing. Defaults: 10 000 iterations, first
/// half discarded, every fifth draw kept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub t_total: usize,
    pub burn_fraction: f64,
    pub thin: usize,
    pub proposal_scale: ProposalScale,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            t_total: 10_000,
            burn_fraction: 0.5,
            thin: 5,
            proposal_scale: ProposalScale::Auto,
        }
    }
}

impl ChainConfig {
    /// Config whose retained count is exactly `retained` under the default
    /// burn-in and thinning.
    pub fn with_retained(retained: usize) -> Self {
        let base = Self::default();
        Self {
            t_total: retained * base.thin * 2,
            ..base
        }
    }

    pub fn burn_in(&self) -> usize {
        (self.t_total as f64 * self.burn_fraction).floor() as usize
    }

    /// `floor(t_total · (1 - burn_fraction) / thin)`.
    pub fn retained(&self) -> usize {
        (self.t_total as f64 * (1.0 - self.burn_fraction) / self.thin as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.burn_fraction) {
            return Err(Error::Config(format!(
                "burn_fraction must lie in [0, 1), got {}",
                self.burn_fraction
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if let ProposalScale::Fixed(s) = self.proposal_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("proposal scale must be positive, got {s}")));
            }
        }
        let retained = self.retained();
        if retained < 2 {
            return Err(Error::Config(format!(
                "chain retains {retained} draws; at least 2 are required"
            )));
        }
        Ok(())
    }
}
