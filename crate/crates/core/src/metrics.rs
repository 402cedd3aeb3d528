//! Distances and summaries for judging a combined posterior against a
//! reference posterior.

use serde::{Deserialize, Serialize};

use crate::combiner::QuantileTable;
use crate::error::{Error, Result};

/// Points in the grid of a single density estimate.
pub const KDE_GRID_POINTS: usize = 512;
/// Kernel contributions beyond this many bandwidths are dropped.
const KERNEL_CUTOFF: f64 = 8.0;
const MAX_UNION_POINTS: usize = 65_536;

fn check_same_grid(a: &QuantileTable, b: &QuantileTable) -> Result<()> {
    if a.grid() == b.grid() {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Cell widths of the probability grid: cell boundaries sit halfway between
/// neighbouring points, and the outer cells extend to 0 and 1.
fn cell_weights(grid: &[f64]) -> Vec<f64> {
    let g = grid.len();
    (0..g)
        .map(|i| {
            let lo = if i == 0 { 0.0 } else { 0.5 * (grid[i - 1] + grid[i]) };
            let hi = if i + 1 == g { 1.0 } else { 0.5 * (grid[i] + grid[i + 1]) };
            hi - lo
        })
        .collect()
}

/// Wasserstein-2 distance between two distributions given by quantile
/// tables on the same grid, `sqrt(∫ (A⁻¹(u) - B⁻¹(u))² du)` by the midpoint
/// rule.
pub fn w2_from_tables(a: &QuantileTable, b: &QuantileTable) -> Result<f64> {
    check_same_grid(a, b)?;
    let sum: f64 = cell_weights(a.grid())
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum();
    Ok(sum.sqrt())
}

/// Largest `|A⁻¹(u) - B⁻¹(u)|` over grid points with `u1 <= u <= u2`.
pub fn quantile_gap(a: &QuantileTable, b: &QuantileTable, u1: f64, u2: f64) -> Result<f64> {
    check_same_grid(a, b)?;
    if !(u1 < u2) {
        return Err(Error::Range(format!("need u1 < u2, got [{u1}, {u2}]")));
    }
    a.grid()
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .filter(|(u, _)| (u1..=u2).contains(*u))
        .map(|(_, (x, y))| (x - y).abs())
        .reduce(f64::max)
        .ok_or_else(|| Error::Range(format!("no grid points in [{u1}, {u2}]")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// `0.9 · min(sd, IQR / 1.34) · T^(-1/5)`.
    Silverman,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    pub grid_x: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoid integral of the density over its grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid_x, &self.density)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Sorted samples with their bandwidth, ready for evaluation anywhere.
struct Kernel {
    sorted: Vec<f64>,
    h: f64,
}

impl Kernel {
    fn new(samples: &[f64], bandwidth: Bandwidth) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientDraws {
                needed: 2,
                got: samples.len(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("samples must be finite".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted[0] == sorted[sorted.len() - 1] {
            return Err(Error::DegenerateSample);
        }
        let h = match bandwidth {
            Bandwidth::Silverman => silverman(&sorted),
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
            Bandwidth::Fixed(h) => return Err(Error::Domain(format!("bandwidth must be positive, got {h}"))),
        };
        Ok(Self { sorted, h })
    }

    fn lo(&self) -> f64 {
        self.sorted[0]
    }

    fn hi(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    fn eval(&self, x: f64) -> f64 {
        let reach = KERNEL_CUTOFF * self.h;
        let start = self.sorted.partition_point(|&s| s < x - reach);
        let end = self.sorted.partition_point(|&s| s <= x + reach);
        let sum: f64 = self.sorted[start..end]
            .iter()
            .map(|s| {
                let z = (x - s) / self.h;
                (-0.5 * z * z).exp()
            })
            .sum();
        sum / (self.sorted.len() as f64 * self.h * (2.0 * std::f64::consts::PI).sqrt())
    }
}

fn silverman(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = type7_quantile(sorted, 0.75) - type7_quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

fn type7_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|k| lo + k as f64 * step).collect()
}

/// Gaussian kernel density estimate on 512 points spanning the sample range
/// widened by three bandwidths on each side.
pub fn kde_1d(samples: &[f64], bandwidth: Bandwidth) -> Result<DensityEstimate> {
    let kernel = Kernel::new(samples, bandwidth)?;
    let grid_x = linspace(kernel.lo() - 3.0 * kernel.h, kernel.hi() + 3.0 * kernel.h, KDE_GRID_POINTS);
    let density = grid_x.iter().map(|&x| kernel.eval(x)).collect();
    Ok(DensityEstimate {
        grid_x,
        density,
        bandwidth: kernel.h,
    })
}

/// `1 - ½ ∫ |q - π|` between Silverman density estimates of two sample sets.
pub fn accuracy(q_samples: &[f64], pi_samples: &[f64]) -> Result<f64> {
    accuracy_with(q_samples, pi_samples, Bandwidth::Silverman)
}

/// [`accuracy`] with an explicit bandwidth rule. Both densities are
/// evaluated on one grid covering both supports, spaced at most a quarter of
/// the smaller bandwidth apart (between 512 and 65536 points).
pub fn accuracy_with(q_samples: &[f64], pi_samples: &[f64], bandwidth: Bandwidth) -> Result<f64> {
    let q = Kernel::new(q_samples, bandwidth)?;
    let pi = Kernel::new(pi_samples, bandwidth)?;
    let lo = (q.lo() - 3.0 * q.h).min(pi.lo() - 3.0 * pi.h);
    let hi = (q.hi() + 3.0 * q.h).max(pi.hi() + 3.0 * pi.h);
    let spacing = 0.25 * q.h.min(pi.h);
    let points = (((hi - lo) / spacing).ceil() as usize + 1).clamp(KDE_GRID_POINTS, MAX_UNION_POINTS);
    let grid = linspace(lo, hi, points);
    let diff: Vec<f64> = grid.iter().map(|&x| (q.eval(x) - pi.eval(x)).abs()).collect();
    Ok((1.0 - 0.5 * trapezoid(&grid, &diff)).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVariance {
    pub bias: f64,
    pub variance: f64,
}

/// Sample mean minus `xi0`, and the sample variance (denominator `T - 1`).
pub fn bias_variance_summary(draws: &[f64], xi0: f64) -> Result<BiasVariance> {
    if draws.len() < 2 {
        return Err(Error::InsufficientDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let variance = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok(BiasVariance {
        bias: mean - xi0,
        variance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub log_n: Vec<f64>,
    pub log_w2: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line through `(ln n, ln w2)`.
pub fn rate_fit(ns: &[f64], w2s: &[f64]) -> Result<RateFit> {
    if ns.len() != w2s.len() {
        return Err(Error::Shape(format!("{} sample sizes but {} distances", ns.len(), w2s.len())));
    }
    if ns.len() < 3 {
        return Err(Error::InsufficientDraws {
            needed: 3,
            got: ns.len(),
        });
    }
    if ns.iter().chain(w2s).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("sample sizes and distances must be positive".into()));
    }
    let log_n: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let log_w2: Vec<f64> = w2s.iter().map(|v| v.ln()).collect();
    let k = log_n.len() as f64;
    let mx = log_n.iter().sum::<f64>() / k;
    let my = log_w2.iter().sum::<f64>() / k;
    let sxx: f64 = log_n.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = log_n.iter().zip(&log_w2).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("sample sizes must not all be equal".into()));
    }
    let slope = sxy / sxx;
    Ok(RateFit {
        intercept: my - slope * mx,
        log_n,
        log_w2,
        slope,
    })
}
