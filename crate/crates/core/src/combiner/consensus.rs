//! Consensus Monte Carlo baseline: precision-weighted averages of aligned draws.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{mean_cov, ridge_inverse, spd_inverse};
use crate::samplers::DrawMatrix;

/// Draw `t` of the output is `(Σ_j W_j)⁻¹ Σ_j W_j θ_tj`, where `W_j` is the
/// inverse sample covariance of shard `j` (ridged if singular).
pub fn consensus_combine(subset_draws: &[DrawMatrix]) -> Result<DrawMatrix> {
    let first = subset_draws.first().ok_or(Error::EmptyDraws)?;
    let (t, d) = (first.t(), first.d());
    if subset_draws.iter().any(|s| s.t() != t || s.d() != d) {
        return Err(Error::Shape("consensus combine needs equal T and d on every shard".into()));
    }
    let weights = subset_draws
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let (_, cov) = mean_cov(s.values())?;
            ridge_inverse(&cov, &format!("sample covariance of shard {j}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let total = weights.iter().fold(DMatrix::zeros(d, d), |acc, w| acc + w);
    let total_inv = spd_inverse(&total, "sum of consensus weights")?;
    let mut out = DMatrix::zeros(t, d);
    for (shard, w) in subset_draws.iter().zip(&weights) {
        let mix = &total_inv * w;
        out += shard.values() * mix.transpose();
    }
    DrawMatrix::new(out, None, first.seed_used)
}

/// Normalized weight matrices `(Σ W)⁻¹ W_j`, exposed for diagnostics.
pub fn consensus_weights(subset_draws: &[DrawMatrix]) -> Result<Vec<DMatrix<f64>>> {
    let weights = subset_draws
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let (_, cov) = mean_cov(s.values())?;
            ridge_inverse(&cov, &format!("sample covariance of shard {j}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let d = weights.first().ok_or(Error::EmptyDraws)?.nrows();
    let total = weights.iter().fold(DMatrix::zeros(d, d), |acc, w| acc + w);
    let total_inv = spd_inverse(&total, "sum of consensus weights")?;
    Ok(weights.iter().map(|w| &total_inv * w).collect())
}
