//! Empirical quantiles and quantile tables.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of points in the default probability grid `u = k / 1000`.
pub const DEFAULT_GRID_SIZE: usize = 999;

/// `size` equispaced probabilities `k / (size + 1)`, `k = 1..=size`.
pub fn uniform_grid(size: usize) -> Vec<f64> {
    let denom = (size + 1) as f64;
    (1..=size).map(|k| k as f64 / denom).collect()
}

pub fn default_grid() -> Vec<f64> {
    uniform_grid(DEFAULT_GRID_SIZE)
}

/// 1-based order-statistic index `clamp(floor(T·u), 1, T)`.
///
/// Products that land within rounding of an integer count as that integer,
/// so `T = 1000, u = 0.95` selects index 950 rather than 949.
pub fn order_index(t: usize, u: f64) -> usize {
    let x = t as f64 * u;
    let nearest = x.round();
    let floor = if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x.floor()
    };
    (floor.max(1.0) as usize).min(t)
}

fn check_level(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(u))
    }
}

/// Sorted copy of `draws`; rejects empty or non-finite input.
pub fn sorted_draws(draws: &[f64]) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("draws must be finite".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Order statistic of already sorted draws at probability `u`.
pub fn quantile_sorted(sorted: &[f64], u: f64) -> f64 {
    sorted[order_index(sorted.len(), u) - 1]
}

/// Empirical quantile `ξ_(floor(T u))` with the index clamped to `[1, T]`.
pub fn empirical_quantile(draws: &[f64], u: f64) -> Result<f64> {
    check_level(u)?;
    Ok(quantile_sorted(&sorted_draws(draws)?, u))
}

/// Monotone map from a probability grid to quantile values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl QuantileTable {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("quantile values must be finite".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("quantile values must be nondecreasing".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Linear interpolation between grid points, constant beyond the ends.
    pub fn interpolate(&self, u: f64) -> f64 {
        let g = &self.grid;
        let last = g.len() - 1;
        if u <= g[0] {
            return self.values[0];
        }
        if u >= g[last] {
            return self.values[last];
        }
        let hi = g.partition_point(|&x| x < u);
        let lo = hi - 1;
        let w = (u - g[lo]) / (g[hi] - g[lo]);
        self.values[lo] + w * (self.values[hi] - self.values[lo])
    }

    /// Apply `x ↦ scale·x + shift` with `scale > 0`.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Domain("affine map must be increasing".into()));
        }
        Self::new(self.grid.clone(), self.values.iter().map(|v| scale * v + shift).collect())
    }

    /// CSV with header `u,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "u,value")?;
        for (u, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{u},{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Grid("empty quantile file".into()))?
            .map_err(|e| Error::Grid(e.to_string()))?;
        if header.trim() != "u,value" {
            return Err(Error::Grid(format!("expected header `u,value`, found `{header}`")));
        }
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Grid(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Grid(format!("line {}: malformed row `{line}`", i + 2)))
            };
            let mut cells = line.split(',');
            grid.push(parse(cells.next())?);
            values.push(parse(cells.next())?);
            if cells.next().is_some() {
                return Err(Error::Grid(format!("line {}: too many columns", i + 2)));
            }
        }
        Self::new(grid, values)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Grid("grid is empty".into()));
    }
    if grid.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::Grid("grid points must lie strictly inside (0, 1)".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Order-statistic quantiles of `draws` at every grid point.
pub fn quantile_table(draws: &[f64], grid: &[f64]) -> Result<QuantileTable> {
    check_grid(grid)?;
    let sorted = sorted_draws(draws)?;
    let values = grid.iter().map(|&u| quantile_sorted(&sorted, u)).collect();
    QuantileTable::new(grid.to_vec(), values)
}

/// Sum in a fixed pairwise order, independent of how the caller scheduled work.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (left, right) = values.split_at(n / 2);
            pairwise_sum(left) + pairwise_sum(right)
        }
    }
}

pub(crate) fn pairwise_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Pointwise mean of quantile tables on a shared grid: the quantile
/// function of their one-dimensional Wasserstein-2 barycenter.
pub fn average_quantile_tables(tables: &[QuantileTable]) -> Result<QuantileTable> {
    let first = tables.first().ok_or(Error::EmptyDraws)?;
    if tables.iter().any(|t| t.grid != first.grid) {
        return Err(Error::GridMismatch);
    }
    let mut column = vec![0.0; tables.len()];
    let values = (0..first.len())
        .map(|i| {
            for (slot, table) in column.iter_mut().zip(tables) {
                *slot = table.values[i];
            }
            pairwise_mean(&column)
        })
        .collect();
    QuantileTable::new(first.grid.clone(), values)
}

/// Atoms of the exact barycenter of `K` empirical distributions with equal
/// draw counts: the mean across shards of the `i`-th order statistics.
pub fn barycenter_atoms(subset_draws: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = subset_draws.first().ok_or(Error::EmptyDraws)?;
    if subset_draws.iter().any(|d| d.len() != first.len()) {
        return Err(Error::Shape("barycenter atoms need equal draw counts".into()));
    }
    let sorted = subset_draws
        .iter()
        .map(|d| sorted_draws(d))
        .collect::<Result<Vec<_>>>()?;
    let mut column = vec![0.0; sorted.len()];
    Ok((0..first.len())
        .map(|i| {
            for (slot, s) in column.iter_mut().zip(&sorted) {
                *slot = s[i];
            }
            pairwise_mean(&column)
        })
        .collect())
}
