//! Combining subset posteriors.
//!
//! The core path averages per-shard quantile functions, which in one
//! dimension is exactly the Wasserstein-2 barycenter. The Gaussian
//! barycenter and consensus Monte Carlo are provided for comparison.

mod consensus;
mod gaussian;
mod interval;
mod quantile;

pub use consensus::{consensus_combine, consensus_weights};
pub use gaussian::{
    barycenter_residual, gaussian_barycenter, gaussian_barycenter_fit, BarycenterFit, GaussianApprox,
    BARYCENTER_MAX_ITERS, BARYCENTER_TOLERANCE,
};
pub use interval::{pie_interval, IntervalEstimate};
pub use quantile::{
    average_quantile_tables, barycenter_atoms, default_grid, empirical_quantile, order_index,
    quantile_sorted, quantile_table, sorted_draws, uniform_grid, QuantileTable, DEFAULT_GRID_SIZE,
};

use rayon::prelude::*;

use crate::error::Result;

/// Per-shard tables and their average.
#[derive(Clone, Debug, PartialEq)]
pub struct PieCombination {
    pub shard_tables: Vec<QuantileTable>,
    pub combined: QuantileTable,
}

/// Quantile tables for every shard (computed in parallel) and their
/// barycenter. Output does not depend on the thread schedule.
pub fn pie_combine<S: AsRef<[f64]> + Sync>(subset_draws: &[S], grid: &[f64]) -> Result<PieCombination> {
    let shard_tables = subset_draws
        .par_iter()
        .map(|d| quantile_table(d.as_ref(), grid))
        .collect::<Result<Vec<_>>>()?;
    let combined = average_quantile_tables(&shard_tables)?;
    Ok(PieCombination {
        shard_tables,
        combined,
    })
}
