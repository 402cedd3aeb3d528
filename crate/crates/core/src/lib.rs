//! Posterior interval estimation for data split across shards.
//!
//! Each shard is sampled from its tempered subset posterior, where the shard
//! likelihood is raised to `n / m_j`. One-dimensional functionals are then
//! combined by averaging the shard quantile functions, which gives the
//! Wasserstein-2 barycenter of the subset posteriors.

pub mod combiner;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod multidim;
pub mod rng;
pub mod samplers;

pub use combiner::{pie_combine, pie_interval, IntervalEstimate, PieCombination, QuantileTable};
pub use error::{Error, Result};
pub use model::{
    apply_functional, partition, CustomModel, Family, LinearFunctional, ModelSpec, NigPrior, ObservationSet,
    PartitionPlan, TemperedTarget,
};
pub use multidim::{combine_multidim, PooledTransform};
pub use rng::{Purpose, StreamKey};
pub use samplers::{ChainConfig, DrawMatrix, ProposalScale};
