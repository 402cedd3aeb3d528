//! End-to-end experiment: data, partition, parallel shard sampling,
//! combination, oracle comparison.

use std::time::Instant;

use pie_core::combiner::{
    barycenter_atoms, consensus_combine, empirical_quantile, pie_combine, pie_interval, quantile_table,
    uniform_grid,
};
use pie_core::metrics::{accuracy, bias_variance_summary, quantile_gap, w2_from_tables};
use pie_core::samplers::{sample_exact, sample_metropolis, ConjugatePosterior};
use pie_core::{
    apply_functional, combine_multidim, partition, DrawMatrix, Family, IntervalEstimate, LinearFunctional,
    ModelSpec, ObservationSet, PartitionPlan, QuantileTable, StreamKey, TemperedTarget,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode, SamplerKind};
use crate::data::{load_csv, simulate_linear, simulate_univariate, true_coefficients};
use crate::error::{HarnessError, Result};

/// Probability range used for the reported quantile gap.
pub const GAP_RANGE: (f64, f64) = (0.05, 0.95);

/// Per-cell metrics against the full-data posterior. Entries that do not
/// apply are `None` and serialize as `null`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CellMetrics {
    pub w2: Option<f64>,
    pub accuracy: Option<f64>,
    pub bias: Option<f64>,
    pub variance: Option<f64>,
    pub quantile_gap: Option<f64>,
    pub rate_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalResult {
    pub name: String,
    /// One table per shard, in shard order. Empty in full-oracle mode.
    pub shard_tables: Vec<QuantileTable>,
    pub combined: QuantileTable,
    pub intervals: Vec<IntervalEstimate>,
    pub metrics: CellMetrics,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub sample_secs: f64,
    pub combine_secs: f64,
    pub metrics_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub n: usize,
    pub shard_sizes: Vec<usize>,
    pub functionals: Vec<FunctionalResult>,
    pub timings: PhaseTimings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub version: String,
    pub runs: Vec<SeedRun>,
}

/// Observations plus the true parameter when it is known.
struct Dataset {
    data: ObservationSet,
    truth: Option<Vec<f64>>,
}

fn dataset(cfg: &ExperimentConfig, seed: u64, loaded: Option<&ObservationSet>) -> Result<Dataset> {
    let family = cfg.model.family();
    if let Some(data) = loaded {
        let truth = cfg.data.theta0.filter(|_| family != Family::NormalLinearNig).map(|t| vec![t]);
        return Ok(Dataset {
            data: data.clone(),
            truth,
        });
    }
    let n = cfg.n.ok_or_else(|| HarnessError::Config("simulated data needs `n`".into()))?;
    if family == Family::NormalLinearNig {
        let p = cfg.data.p.ok_or_else(|| HarnessError::Config("simulated linear data needs `data.p`".into()))?;
        let mut truth = true_coefficients(p);
        truth.push(1.0);
        Ok(Dataset {
            data: simulate_linear(n, p, seed)?,
            truth: Some(truth),
        })
    } else {
        let theta0 = cfg
            .data
            .theta0
            .ok_or_else(|| HarnessError::Config("simulated data needs `data.theta0`".into()))?;
        Ok(Dataset {
            data: simulate_univariate(family, theta0, n, seed)?,
            truth: Some(vec![theta0]),
        })
    }
}

fn check_data(cfg: &ExperimentConfig, data: &ObservationSet) -> Result<()> {
    if let Some(n) = cfg.n {
        if n != data.n() {
            return Err(HarnessError::Config(format!("config n = {n} but the data has {} rows", data.n())));
        }
    }
    if data.n() < cfg.k {
        return Err(HarnessError::Config(format!("{} observations cannot fill k = {} shards", data.n(), cfg.k)));
    }
    let linear = cfg.model.family() == Family::NormalLinearNig;
    if linear && data.p() == 0 {
        return Err(HarnessError::Data("the normal-linear model needs x1..xp columns".into()));
    }
    if !linear && data.p() > 0 {
        return Err(HarnessError::Data(format!("{} data must not have design columns", cfg.model.family())));
    }
    Ok(())
}

fn sample_shard(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    data: &ObservationSet,
    plan: &PartitionPlan,
    seed: u64,
    j: usize,
) -> pie_core::Result<DrawMatrix> {
    let shard = data.subset(&plan.shard_indices(j))?;
    let target = TemperedTarget::new(model.clone(), shard, plan.temper(j))?;
    let key = StreamKey::shard(seed, j);
    match cfg.sampler {
        SamplerKind::Exact => sample_exact(&target, cfg.chain.retained(), key),
        SamplerKind::Metropolis => sample_metropolis(&target, &target.initial_point(), &cfg.chain, key),
    }
}

/// Samples every shard in parallel. All shards run to completion; failures
/// are reported together, tagged with their shard ids.
fn sample_shards(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    data: &ObservationSet,
    plan: &PartitionPlan,
    seed: u64,
) -> Result<Vec<DrawMatrix>> {
    let results: Vec<_> = (0..plan.k)
        .into_par_iter()
        .map(|j| sample_shard(cfg, model, data, plan, seed, j))
        .collect();
    let mut draws = Vec::with_capacity(plan.k);
    let mut failures = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(d) => draws.push(d),
            Err(e) => failures.push((j, e)),
        }
    }
    if failures.is_empty() {
        Ok(draws)
    } else {
        Err(HarnessError::Shards(failures))
    }
}

/// The untempered full-data posterior and `draws` exact draws from it.
struct Oracle {
    posterior: ConjugatePosterior,
    draws: DrawMatrix,
}

impl Oracle {
    fn new(model: &ModelSpec, data: &ObservationSet, draws: usize, seed: u64) -> Result<Self> {
        let target = TemperedTarget::new(model.clone(), data.clone(), 1.0)?;
        let posterior = ConjugatePosterior::from_target(&target)?;
        let draws = posterior.sample(draws, StreamKey::oracle(seed))?;
        Ok(Self { posterior, draws })
    }

    /// Closed-form table when available, otherwise the table of the draws.
    fn table(&self, f: &LinearFunctional, grid: &[f64], samples: &[f64]) -> Result<QuantileTable> {
        let exact: Option<Vec<f64>> = grid.iter().map(|&u| self.posterior.functional_quantile(f, u)).collect();
        match exact {
            Some(values) => Ok(QuantileTable::new(grid.to_vec(), values)?),
            None => Ok(quantile_table(samples, grid)?),
        }
    }

    fn interval(&self, f: &LinearFunctional, alpha: f64, samples: &[f64]) -> Result<IntervalEstimate> {
        let lower = self.posterior.functional_quantile(f, alpha / 2.0);
        let upper = self.posterior.functional_quantile(f, 1.0 - alpha / 2.0);
        match (lower, upper) {
            (Some(lower), Some(upper)) => Ok(IntervalEstimate { alpha, lower, upper }),
            _ => empirical_interval(samples, alpha),
        }
    }
}

fn empirical_interval(samples: &[f64], alpha: f64) -> Result<IntervalEstimate> {
    Ok(IntervalEstimate {
        alpha,
        lower: empirical_quantile(samples, alpha / 2.0)?,
        upper: empirical_quantile(samples, 1.0 - alpha / 2.0)?,
    })
}

/// Combined distribution of one functional: its table, a sample from it and
/// its intervals.
struct Combined {
    shard_tables: Vec<QuantileTable>,
    table: QuantileTable,
    samples: Vec<f64>,
    intervals: Vec<IntervalEstimate>,
}

fn combine_functional(
    cfg: &ExperimentConfig,
    f: &LinearFunctional,
    shards: &[DrawMatrix],
    joint: Option<&DrawMatrix>,
    grid: &[f64],
) -> Result<Combined> {
    let shard_values = shards
        .iter()
        .map(|d| apply_functional(f, d))
        .collect::<pie_core::Result<Vec<_>>>()?;
    let pie = pie_combine(&shard_values, grid)?;
    match joint {
        None => Ok(Combined {
            samples: barycenter_atoms(&shard_values)?,
            intervals: cfg
                .alpha_levels
                .iter()
                .map(|&a| pie_interval(&shard_values, a))
                .collect::<pie_core::Result<_>>()?,
            shard_tables: pie.shard_tables,
            table: pie.combined,
        }),
        Some(draws) => {
            let samples = apply_functional(f, draws)?;
            Ok(Combined {
                table: quantile_table(&samples, grid)?,
                intervals: cfg
                    .alpha_levels
                    .iter()
                    .map(|&a| empirical_interval(&samples, a))
                    .collect::<Result<_>>()?,
                samples,
                shard_tables: pie.shard_tables,
            })
        }
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, loaded: Option<&ObservationSet>) -> Result<SeedRun> {
    let Dataset { data, truth } = dataset(cfg, seed, loaded)?;
    check_data(cfg, &data)?;
    let model = cfg.model.build(data.p())?;
    let d = model.parameter_dim();
    let functionals = cfg
        .functionals
        .iter()
        .enumerate()
        .map(|(i, fc)| fc.resolve(i, d))
        .collect::<Result<Vec<_>>>()?;
    let grid = uniform_grid(cfg.grid_size);
    let plan = partition(data.n(), cfg.k, seed)?;
    let t = cfg.chain.retained();
    let mut timings = PhaseTimings::default();

    let clock = Instant::now();
    let shards = match cfg.mode {
        Mode::FullOracle => Vec::new(),
        _ => sample_shards(cfg, &model, &data, &plan, seed)?,
    };
    timings.sample_secs = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let joint = match cfg.mode {
        Mode::Consensus => Some(consensus_combine(&shards)?),
        Mode::Multidim => Some(combine_multidim(&shards, &grid, t, seed)?),
        Mode::Pie | Mode::FullOracle => None,
    };
    let combined: Vec<Option<Combined>> = functionals
        .iter()
        .map(|(_, f)| match cfg.mode {
            Mode::FullOracle => Ok(None),
            _ => combine_functional(cfg, f, &shards, joint.as_ref(), &grid).map(Some),
        })
        .collect::<Result<_>>()?;
    timings.combine_secs = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let oracle = if model.family().is_conjugate() {
        Some(Oracle::new(&model, &data, cfg.k * t, seed)?)
    } else {
        None
    };
    let mut results = Vec::with_capacity(functionals.len());
    for ((name, f), combined) in functionals.iter().zip(combined) {
        let truth_value = truth.as_ref().map(|th| f.evaluate(th));
        let oracle_view = oracle
            .as_ref()
            .map(|o| -> Result<_> {
                let samples = apply_functional(f, &o.draws)?;
                let table = o.table(f, &grid, &samples)?;
                Ok((o, samples, table))
            })
            .transpose()?;
        let result = match (combined, oracle_view) {
            (Some(c), view) => {
                let mut metrics = CellMetrics::default();
                if let Some(xi0) = truth_value {
                    let bv = bias_variance_summary(&c.samples, xi0)?;
                    metrics.bias = Some(bv.bias);
                }
                metrics.variance = Some(bias_variance_summary(&c.samples, 0.0)?.variance);
                if let Some((_, samples, table)) = &view {
                    metrics.w2 = Some(w2_from_tables(&c.table, table)?);
                    metrics.quantile_gap = Some(quantile_gap(&c.table, table, GAP_RANGE.0, GAP_RANGE.1)?);
                    metrics.accuracy = Some(accuracy(&c.samples, samples)?);
                }
                FunctionalResult {
                    name: name.clone(),
                    shard_tables: c.shard_tables,
                    combined: c.table,
                    intervals: c.intervals,
                    metrics,
                }
            }
            (None, Some((o, samples, table))) => {
                let bv = bias_variance_summary(&samples, truth_value.unwrap_or(0.0))?;
                FunctionalResult {
                    name: name.clone(),
                    shard_tables: Vec::new(),
                    intervals: cfg
                        .alpha_levels
                        .iter()
                        .map(|&a| o.interval(f, a, &samples))
                        .collect::<Result<_>>()?,
                    combined: table,
                    metrics: CellMetrics {
                        bias: truth_value.map(|_| bv.bias),
                        variance: Some(bv.variance),
                        ..CellMetrics::default()
                    },
                }
            }
            (None, None) => {
                return Err(HarnessError::Config(
                    "full-oracle mode needs a conjugate family".into(),
                ))
            }
        };
        results.push(result);
    }
    timings.metrics_secs = clock.elapsed().as_secs_f64();

    Ok(SeedRun {
        seed,
        n: data.n(),
        shard_sizes: plan.shard_sizes.clone(),
        functionals: results,
        timings,
    })
}

/// Runs every seed of `cfg` on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let loaded = cfg.data.path.as_deref().map(load_csv).transpose()?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&seed| run_seed(cfg, seed, loaded.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        runs,
    })
}

/// [`run_experiment`] on a dedicated pool of `workers` threads. The report
/// does not depend on `workers`.
pub fn run_experiment_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_experiment(cfg))
}
