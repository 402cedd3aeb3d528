use serde::{Deserialize, Serialize};

use super::quantile::{pairwise_mean, quantile_sorted, sorted_draws};
use crate::error::{Error, Result};

/// Equal-tailed credible interval `[q_{α/2}, q_{1-α/2}]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
}

impl IntervalEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Posterior interval estimate: average the per-shard order statistics at
/// `α/2` and `1 - α/2`.
pub fn pie_interval<S: AsRef<[f64]>>(subset_draws: &[S], alpha: f64) -> Result<IntervalEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    if subset_draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let mut lowers = Vec::with_capacity(subset_draws.len());
    let mut uppers = Vec::with_capacity(subset_draws.len());
    for shard in subset_draws {
        let shard = shard.as_ref();
        if shard.len() < 2 {
            return Err(if shard.is_empty() {
                Error::EmptyDraws
            } else {
                Error::InsufficientDraws { needed: 2, got: shard.len() }
            });
        }
        let sorted = sorted_draws(shard)?;
        lowers.push(quantile_sorted(&sorted, alpha / 2.0));
        uppers.push(quantile_sorted(&sorted, 1.0 - alpha / 2.0));
    }
    Ok(IntervalEstimate {
        alpha,
        lower: pairwise_mean(&lowers),
        upper: pairwise_mean(&uppers),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combiner::quantile::empirical_quantile;
    use proptest::prelude::*;

    #[test]
    fn arithmetic_mean_of_shard_quantiles() {
        // 20 draws per shard: index floor(20·0.05) = 1 and floor(20·0.95) = 19
        let mut a: Vec<f64> = (0..20).map(|i| 0.0 + i as f64 * 0.5).collect();
        let mut b: Vec<f64> = (0..20).map(|i| 2.0 + i as f64 * (12.0 / 18.0)).collect();
        a[18] = 10.0;
        b[18] = 14.0;
        a[19] = 100.0;
        b[19] = 100.0;
        assert_eq!(empirical_quantile(&a, 0.05).unwrap(), 0.0);
        assert_eq!(empirical_quantile(&b, 0.95).unwrap(), 14.0);
        let iv = pie_interval(&[a, b], 0.1).unwrap();
        assert_eq!((iv.lower, iv.upper), (1.0, 12.0));
    }

    #[test]
    fn identical_shards_give_single_shard_interval() {
        let draws: Vec<f64> = (0..137).map(|i| ((i * 37) % 101) as f64).collect();
        let single = pie_interval(&[draws.clone()], 0.05).unwrap();
        let many = pie_interval(&vec![draws; 6], 0.05).unwrap();
        assert_eq!(single, many);
    }

    #[test]
    fn errors() {
        assert_eq!(pie_interval(&[vec![1.0, 2.0]], 0.0), Err(Error::InvalidLevel(0.0)));
        assert_eq!(pie_interval(&[vec![1.0, 2.0]], 1.5), Err(Error::InvalidLevel(1.5)));
        assert!(matches!(
            pie_interval(&[vec![1.0, 2.0], vec![1.0]], 0.1),
            Err(Error::InsufficientDraws { .. })
        ));
        assert_eq!(pie_interval(&[Vec::<f64>::new()], 0.1), Err(Error::EmptyDraws));
    }

    proptest! {
        #[test]
        fn affine_equivariance(
            shards in proptest::collection::vec(proptest::collection::vec(-100i32..100, 2..50), 1..6),
            c_pow in -3i32..4,
            s in -64i32..64,
            alpha in 0.01f64..0.99,
        ) {
            let c = 2f64.powi(c_pow);
            let s = s as f64;
            let base: Vec<Vec<f64>> = shards.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect();
            let moved: Vec<Vec<f64>> = base.iter().map(|v| v.iter().map(|x| c * x + s).collect()).collect();
            let a = pie_interval(&base, alpha).unwrap();
            let b = pie_interval(&moved, alpha).unwrap();
            prop_assert!((b.lower - (c * a.lower + s)).abs() <= 1e-12 * (c * a.lower.abs() + s.abs()).max(1.0));
            prop_assert!((b.upper - (c * a.upper + s)).abs() <= 1e-12 * (c * a.upper.abs() + s.abs()).max(1.0));

            // with a dyadic shard count every step is exact in floating point
            let dyadic = 1usize << (usize::BITS - 1 - base.len().leading_zeros());
            let a = pie_interval(&base[..dyadic], alpha).unwrap();
            let b = pie_interval(&moved[..dyadic], alpha).unwrap();
            prop_assert_eq!(b.lower, c * a.lower + s);
            prop_assert_eq!(b.upper, c * a.upper + s);
        }
    }
}
