//! Isotropic Gaussian random-walk Metropolis.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ChainConfig, DrawMatrix, ProposalScale};
use crate::error::{Error, Result};
use crate::model::TemperedTarget;
use crate::rng::{Purpose, StreamKey};

/// Acceptance rate the adaptation aims for: the high-dimensional optimum,
/// or the one-dimensional optimum for scalar targets.
fn target_acceptance(d: usize) -> f64 {
    if d == 1 {
        0.44
    } else {
        0.234
    }
}
const ADAPT_BATCH: usize = 50;
/// Adaptation always gets at least this many iterations, even with no burn-in.
const MIN_ADAPT_ITERS: usize = 500;

/// A finished chain plus its diagnostics.
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub draws: DrawMatrix,
    /// Acceptance rate over the retained phase.
    pub acceptance_rate: f64,
    /// Proposal standard deviation used in the retained phase.
    pub proposal_scale: f64,
}

/// Retained draws of a random-walk Metropolis chain on `target`.
pub fn sample_metropolis(
    target: &TemperedTarget,
    init: &[f64],
    cfg: &ChainConfig,
    key: StreamKey,
) -> Result<DrawMatrix> {
    run_metropolis(target, init, cfg, key).map(|run| run.draws)
}

/// Runs the chain and reports acceptance and the frozen proposal scale.
///
/// With `ProposalScale::Auto` the burn-in (extended to at least 500
/// iterations) doubles as an adaptation phase: the log scale moves by
/// `2 (rate - r*) / sqrt(b)` after every batch `b` of 50 proposals, where
/// `r*` is 0.44 for scalar targets and 0.234 otherwise.
/// The scale is frozen before the first retained iteration.
pub fn run_metropolis(
    target: &TemperedTarget,
    init: &[f64],
    cfg: &ChainConfig,
    key: StreamKey,
) -> Result<ChainRun> {
    cfg.validate()?;
    let d = target.dim();
    if init.len() != d {
        return Err(Error::Shape(format!("initial point has length {}, expected {d}", init.len())));
    }
    let mut current = init.to_vec();
    let mut current_lp = target.tempered_log_density(&current);
    if !current_lp.is_finite() {
        return Err(Error::InvalidInit);
    }

    let mut rng = key.rng();
    let mut proposal = vec![0.0; d];
    let mut step = |rng: &mut rand_chacha::ChaCha20Rng,
                    current: &mut Vec<f64>,
                    current_lp: &mut f64,
                    scale: f64|
     -> bool {
        for (p, c) in proposal.iter_mut().zip(current.iter()) {
            let z: f64 = StandardNormal.sample(rng);
            *p = c + scale * z;
        }
        let lp = target.tempered_log_density(&proposal);
        let log_u = rng.random::<f64>().ln();
        if lp.is_finite() && log_u < lp - *current_lp {
            current.copy_from_slice(&proposal);
            *current_lp = lp;
            true
        } else {
            false
        }
    };

    let burn = cfg.burn_in();
    let scale = match cfg.proposal_scale {
        ProposalScale::Fixed(s) => {
            for _ in 0..burn {
                step(&mut rng, &mut current, &mut current_lp, s);
            }
            s
        }
        ProposalScale::Auto => {
            let mut log_scale = initial_scale(target, &current).ln();
            let adapt_iters = burn.max(MIN_ADAPT_ITERS);
            let mut accepted = 0usize;
            let mut batch = 0usize;
            for i in 0..adapt_iters {
                if step(&mut rng, &mut current, &mut current_lp, log_scale.exp()) {
                    accepted += 1;
                }
                if (i + 1) % ADAPT_BATCH == 0 {
                    batch += 1;
                    let rate = accepted as f64 / ADAPT_BATCH as f64;
                    log_scale += 2.0 * (rate - target_acceptance(d)) / (batch as f64).sqrt();
                    accepted = 0;
                }
            }
            log_scale.exp()
        }
    };

    let retained = cfg.retained();
    let mut values = DMatrix::zeros(retained, d);
    let mut accepted = 0usize;
    for row in 0..retained {
        for _ in 0..cfg.thin {
            if step(&mut rng, &mut current, &mut current_lp, scale) {
                accepted += 1;
            }
        }
        for (j, v) in current.iter().enumerate() {
            values[(row, j)] = *v;
        }
    }

    let shard_id = (key.purpose == Purpose::Shard).then_some(key.index as usize);
    Ok(ChainRun {
        draws: DrawMatrix::new(values, shard_id, key.seed)?,
        acceptance_rate: accepted as f64 / (retained * cfg.thin) as f64,
        proposal_scale: scale,
    })
}

/// Starting proposal scale from the curvature of the log density at `x`:
/// `2.38 / sqrt(d)` times the smallest axis-wise standard deviation implied
/// by a central second difference. Falls back to 0.1.
fn initial_scale(target: &TemperedTarget, x: &[f64]) -> f64 {
    let d = x.len();
    let f0 = target.tempered_log_density(x);
    let mut best = f64::INFINITY;
    let mut probe = x.to_vec();
    for i in 0..d {
        let h = 1e-4 * x[i].abs().max(1e-2);
        probe[i] = x[i] + h;
        let up = target.tempered_log_density(&probe);
        probe[i] = x[i] - h;
        let down = target.tempered_log_density(&probe);
        probe[i] = x[i];
        let curvature = (up - 2.0 * f0 + down) / (h * h);
        if curvature.is_finite() && curvature < 0.0 {
            best = best.min((-curvature).sqrt().recip());
        }
    }
    if best.is_finite() && best > 0.0 {
        2.38 / (d as f64).sqrt() * best
    } else {
        0.1
    }
}
