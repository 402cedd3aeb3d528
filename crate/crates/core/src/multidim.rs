//! Joint posterior approximation by standardizing subset draws, combining
//! each standardized coordinate with quantile averaging, resampling the
//! marginals independently and mapping back.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::combiner::{pie_combine, QuantileTable};
use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_pd, mean_cov, ridge_inverse, spd_inverse, sqrt_psd, symmetrize};
use crate::rng::{Purpose, StreamKey};
use crate::samplers::DrawMatrix;

/// Pooled location and scale: `m̂ = mean_j m̂_j`, `V̂⁻¹ = mean_j V̂_j⁻¹`.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledTransform {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cov_sqrt: DMatrix<f64>,
    pub cov_inv_sqrt: DMatrix<f64>,
}

impl PooledTransform {
    /// `V̂^{-1/2} (θ - m̂)` for every row.
    pub fn standardize(&self, draws: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = draws.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        centered * &self.cov_inv_sqrt
    }

    /// `V̂^{1/2} θ' + m̂` for every row.
    pub fn restore(&self, standardized: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = standardized * &self.cov_sqrt;
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        out
    }
}

/// Pooled transform from per-shard sample means and covariances (denominator
/// `T - 1`), plus every shard's standardized draws.
pub fn pooled_center_scale(subset_draws: &[DrawMatrix]) -> Result<(PooledTransform, Vec<DrawMatrix>)> {
    let first = subset_draws.first().ok_or(Error::EmptyDraws)?;
    let d = first.d();
    if subset_draws.iter().any(|s| s.d() != d) {
        return Err(Error::Shape("shards have different parameter dimensions".into()));
    }
    let k = subset_draws.len() as f64;
    let mut mean = DVector::zeros(d);
    let mut precision = DMatrix::zeros(d, d);
    for (j, shard) in subset_draws.iter().enumerate() {
        let (m, cov) = mean_cov(shard.values())?;
        mean += m;
        precision += ridge_inverse(&cov, &format!("sample covariance of shard {j}"))?;
    }
    mean /= k;
    let precision = symmetrize(&(precision / k));
    let cov = spd_inverse(&precision, "pooled covariance")?;
    let cov_sqrt = sqrt_psd(&cov);
    let cov_inv_sqrt = inv_sqrt_pd(&cov, "pooled covariance")?;
    let transform = PooledTransform {
        mean,
        cov,
        cov_sqrt,
        cov_inv_sqrt,
    };
    let standardized = subset_draws
        .iter()
        .map(|s| DrawMatrix::new(transform.standardize(s.values()), s.shard_id, s.seed_used))
        .collect::<Result<Vec<_>>>()?;
    Ok((transform, standardized))
}

/// Everything produced by [`combine_multidim_full`].
#[derive(Clone, Debug)]
pub struct MultidimCombination {
    pub transform: PooledTransform,
    /// Averaged quantile table of each standardized coordinate.
    pub coordinate_tables: Vec<QuantileTable>,
    /// Resampled draws in standardized coordinates.
    pub standardized: DrawMatrix,
    /// The same draws mapped back to the original parameterization.
    pub draws: DrawMatrix,
}

/// Approximate joint draws from the full posterior.
pub fn combine_multidim(
    subset_draws: &[DrawMatrix],
    grid: &[f64],
    t_out: usize,
    seed: u64,
) -> Result<DrawMatrix> {
    combine_multidim_full(subset_draws, grid, t_out, seed).map(|c| c.draws)
}

/// Coordinate `c` is resampled by inverse CDF on its averaged table, with
/// uniforms from the stream `(seed, Resample, c)` and linear interpolation
/// between grid points (constant beyond the grid ends).
pub fn combine_multidim_full(
    subset_draws: &[DrawMatrix],
    grid: &[f64],
    t_out: usize,
    seed: u64,
) -> Result<MultidimCombination> {
    if grid.len() < 2 {
        return Err(Error::Grid("multidimensional combine needs at least 2 grid points".into()));
    }
    if t_out == 0 {
        return Err(Error::Config("t_out must be at least 1".into()));
    }
    let (transform, standardized) = pooled_center_scale(subset_draws)?;
    let d = transform.mean.len();

    let columns = (0..d)
        .into_par_iter()
        .map(|c| {
            let shard_columns: Vec<Vec<f64>> = standardized.iter().map(|s| s.column(c)).collect();
            let table = pie_combine(&shard_columns, grid)?.combined;
            let mut rng = StreamKey::new(seed, Purpose::Resample, c as u64).rng();
            let samples: Vec<f64> = (0..t_out)
                .map(|_| table.interpolate(rng.random::<f64>()))
                .collect();
            Ok((table, samples))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut resampled = DMatrix::zeros(t_out, d);
    let mut coordinate_tables = Vec::with_capacity(d);
    for (c, (table, samples)) in columns.into_iter().enumerate() {
        resampled.set_column(c, &DVector::from_vec(samples));
        coordinate_tables.push(table);
    }
    let restored = transform.restore(&resampled);
    Ok(MultidimCombination {
        standardized: DrawMatrix::new(resampled, None, seed)?,
        draws: DrawMatrix::new(restored, None, seed)?,
        coordinate_tables,
        transform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combiner::{default_grid, quantile_table};
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_shard(mean: &[f64], chol: &DMatrix<f64>, t: usize, key: StreamKey) -> DrawMatrix {
        let d = mean.len();
        let mut rng = key.rng();
        let z = DMatrix::<f64>::from_fn(t, d, |_, _| StandardNormal.sample(&mut rng));
        let mut x = z * chol.transpose();
        for mut row in x.row_iter_mut() {
            row += DVector::from_column_slice(mean).transpose();
        }
        DrawMatrix::new(x, key.index.try_into().ok(), key.seed).unwrap()
    }

    #[test]
    fn single_shard_self_whitens() {
        let chol = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.5]);
        let shard = gaussian_shard(&[1.0, -2.0], &chol, 5000, StreamKey::shard(1, 0));
        let (transform, std) = pooled_center_scale(&[shard]).unwrap();
        let (m, c) = mean_cov(std[0].values()).unwrap();
        assert!(m.amax() < 1e-10);
        assert_relative_eq!(c, DMatrix::identity(2, 2), epsilon = 1e-8);
        assert_relative_eq!(&transform.cov_sqrt * &transform.cov_sqrt, transform.cov, epsilon = 1e-10);
    }

    #[test]
    fn duplicate_shards_match_single() {
        let chol = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, -0.4, 1.0]);
        let shard = gaussian_shard(&[0.0, 3.0], &chol, 2000, StreamKey::shard(2, 0));
        let (one, _) = pooled_center_scale(&[shard.clone()]).unwrap();
        let (two, _) = pooled_center_scale(&[shard.clone(), shard]).unwrap();
        assert_relative_eq!(one.mean, two.mean, epsilon = 1e-12);
        assert_relative_eq!(one.cov, two.cov, epsilon = 1e-10);
    }

    #[test]
    fn pooled_variance_is_harmonic() {
        // sample variances exactly 1 and 1/9
        let a = DrawMatrix::from_column(&[-1.0, 0.0, 1.0], None, 0).unwrap();
        let b = DrawMatrix::from_column(&[-1.0 / 3.0, 0.0, 1.0 / 3.0], None, 0).unwrap();
        let (transform, _) = pooled_center_scale(&[a, b]).unwrap();
        assert_relative_eq!(transform.cov[(0, 0)], 0.2, epsilon = 1e-12);
        // V̂⁻¹ equals the average shard precision
        assert_relative_eq!(1.0 / transform.cov[(0, 0)], (1.0 + 9.0) / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn single_shard_round_trip_marginals() {
        let chol = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.8, 0.6]);
        let shard = gaussian_shard(&[0.5, 0.5], &chol, 20_000, StreamKey::shard(3, 0));
        let grid = default_grid();
        let out = combine_multidim(&[shard.clone()], &grid, 20_000, 17).unwrap();
        let inner = crate::combiner::uniform_grid(19);
        for c in 0..2 {
            let before = quantile_table(&shard.column(c), &inner).unwrap();
            let after = quantile_table(&out.column(c), &inner).unwrap();
            for (x, y) in before.values().iter().zip(after.values()) {
                // Monte Carlo noise of the resampled quantiles dominates
                assert!((x - y).abs() < 0.05, "coordinate {c}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn back_transform_is_exact() {
        let chol = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.9]);
        let shards: Vec<_> = (0..3)
            .map(|j| gaussian_shard(&[j as f64, 0.0], &chol, 1000, StreamKey::shard(4, j)))
            .collect();
        let full = combine_multidim_full(&shards, &default_grid(), 500, 8).unwrap();
        let expected = full.transform.restore(full.standardized.values());
        assert_eq!(&expected, full.draws.values());
    }

    #[test]
    fn deterministic_and_validated() {
        let chol = DMatrix::identity(2, 2);
        let shards: Vec<_> = (0..2)
            .map(|j| gaussian_shard(&[0.0, 0.0], &chol, 300, StreamKey::shard(5, j)))
            .collect();
        let grid = default_grid();
        assert_eq!(
            combine_multidim(&shards, &grid, 100, 1).unwrap(),
            combine_multidim(&shards, &grid, 100, 1).unwrap()
        );
        assert!(matches!(combine_multidim(&shards, &[0.5], 100, 1), Err(Error::Grid(_))));
        assert!(combine_multidim(&shards, &grid, 0, 1).is_err());
    }
}
