//! The full pipeline through the public API: partition, sample each shard,
//! combine and compare with the full-data posterior.

use nalgebra::{DMatrix, DVector};
use pie_core::combiner::{consensus_combine, default_grid, quantile_table, uniform_grid};
use pie_core::metrics::{accuracy, quantile_gap, w2_from_tables};
use pie_core::samplers::{sample_exact, sample_metropolis, ConjugatePosterior};
use pie_core::{
    apply_functional, combine_multidim, partition, pie_combine, pie_interval, ChainConfig, DrawMatrix,
    LinearFunctional, ModelSpec, NigPrior, ObservationSet, StreamKey, TemperedTarget,
};

fn poisson_data(n: usize) -> ObservationSet {
    // deterministic counts with mean 4
    ObservationSet::univariate((0..n).map(|i| ((i * 7919) % 9) as f64).collect()).unwrap()
}

fn shard_targets(model: &ModelSpec, data: &ObservationSet, k: usize, seed: u64) -> Vec<TemperedTarget> {
    let plan = partition(data.n(), k, seed).unwrap();
    (0..k)
        .map(|j| {
            let subset = data.subset(&plan.shard_indices(j)).unwrap();
            TemperedTarget::new(model.clone(), subset, plan.temper(j)).unwrap()
        })
        .collect()
}

#[test]
fn pie_matches_full_posterior_for_poisson() {
    let data = poisson_data(20_000);
    let model = ModelSpec::poisson_gamma(1.0, 1.0).unwrap();
    let targets = shard_targets(&model, &data, 8, 3);
    let draws: Vec<Vec<f64>> = targets
        .iter()
        .enumerate()
        .map(|(j, t)| sample_exact(t, 20_000, StreamKey::shard(3, j)).unwrap().column(0))
        .collect();
    let grid = default_grid();
    let combined = pie_combine(&draws, &grid).unwrap().combined;

    let full = TemperedTarget::new(model, data, 1.0).unwrap();
    let oracle = ConjugatePosterior::from_target(&full).unwrap();
    let f = LinearFunctional::coordinate(0, 1);
    let values = grid.iter().map(|&u| oracle.functional_quantile(&f, u).unwrap()).collect();
    let exact = pie_core::QuantileTable::new(grid.clone(), values).unwrap();
    let sd = oracle.variances()[0].sqrt();

    assert!(quantile_gap(&combined, &exact, 0.05, 0.95).unwrap() < 0.05 * sd);
    assert!(w2_from_tables(&combined, &exact).unwrap() < 0.05 * sd);

    let interval = pie_interval(&draws, 0.05).unwrap();
    let lo = oracle.functional_quantile(&f, 0.025).unwrap();
    let hi = oracle.functional_quantile(&f, 0.975).unwrap();
    assert!((interval.lower - lo).abs() < 0.05 * sd);
    assert!((interval.upper - hi).abs() < 0.05 * sd);
}

#[test]
fn metropolis_and_exact_shards_agree() {
    let data = poisson_data(2_000);
    let model = ModelSpec::poisson_gamma(2.0, 1.0).unwrap();
    let targets = shard_targets(&model, &data, 4, 9);
    let cfg = ChainConfig::with_retained(4_000);
    let mcmc: Vec<Vec<f64>> = targets
        .iter()
        .enumerate()
        .map(|(j, t)| {
            sample_metropolis(t, &t.initial_point(), &cfg, StreamKey::shard(9, j))
                .unwrap()
                .column(0)
        })
        .collect();
    let exact: Vec<Vec<f64>> = targets
        .iter()
        .enumerate()
        .map(|(j, t)| sample_exact(t, 4_000, StreamKey::shard(10, j)).unwrap().column(0))
        .collect();
    let grid = uniform_grid(99);
    let a = pie_combine(&mcmc, &grid).unwrap().combined;
    let b = pie_combine(&exact, &grid).unwrap().combined;
    let atoms_a = pie_core::combiner::barycenter_atoms(&mcmc).unwrap();
    let atoms_b = pie_core::combiner::barycenter_atoms(&exact).unwrap();
    let sd = {
        let m = atoms_b.iter().sum::<f64>() / atoms_b.len() as f64;
        (atoms_b.iter().map(|v| (v - m).powi(2)).sum::<f64>() / atoms_b.len() as f64).sqrt()
    };
    assert!(quantile_gap(&a, &b, 0.05, 0.95).unwrap() < 0.15 * sd);
    assert!(accuracy(&atoms_a, &atoms_b).unwrap() > 0.9);
}

fn linear_data(n: usize, p: usize) -> ObservationSet {
    let z = DMatrix::from_fn(n, p, |i, j| if (i * 31 + j * 17) % 5 < 2 { 1.0 } else { -1.0 });
    let beta = DVector::from_fn(p, |j, _| if j == 0 { 1.0 } else { 0.0 });
    let noise = DVector::from_fn(n, |i, _| ((i * 2654435761usize) % 1000) as f64 / 1000.0 - 0.5);
    let y = &z * beta + noise;
    ObservationSet::new(y.iter().copied().collect(), Some(z), "synthetic").unwrap()
}

#[test]
fn linear_model_combiners_agree_on_the_location() {
    let data = linear_data(3_000, 3);
    let model = ModelSpec::NormalLinearNig(NigPrior::isotropic(3, 100.0, 5.0, 1.0).unwrap());
    let targets = shard_targets(&model, &data, 5, 1);
    let draws: Vec<DrawMatrix> = targets
        .iter()
        .enumerate()
        .map(|(j, t)| sample_exact(t, 3_000, StreamKey::shard(1, j)).unwrap())
        .collect();
    let first = LinearFunctional::coordinate(0, 4);
    let columns: Vec<Vec<f64>> = draws.iter().map(|d| apply_functional(&first, d).unwrap()).collect();
    let grid = uniform_grid(99);
    let pie = pie_combine(&columns, &grid).unwrap().combined;
    let consensus = consensus_combine(&draws).unwrap();
    let consensus_table = quantile_table(&consensus.column(0), &grid).unwrap();
    let multi = combine_multidim(&draws, &grid, 3_000, 1).unwrap();
    let multi_table = quantile_table(&multi.column(0), &grid).unwrap();

    let median = |t: &pie_core::QuantileTable| t.interpolate(0.5);
    assert!((median(&pie) - 1.0).abs() < 0.05);
    assert!((median(&pie) - median(&consensus_table)).abs() < 0.01);
    assert!((median(&pie) - median(&multi_table)).abs() < 0.01);
    let spread = pie.interpolate(0.9) - pie.interpolate(0.1);
    assert!(quantile_gap(&pie, &multi_table, 0.1, 0.9).unwrap() < 0.1 * spread);
}

#[test]
fn pipeline_is_deterministic_in_seed() {
    let data = poisson_data(1_000);
    let model = ModelSpec::poisson_gamma(1.0, 1.0).unwrap();
    let run = |seed: u64| {
        let targets = shard_targets(&model, &data, 4, seed);
        let draws: Vec<Vec<f64>> = targets
            .iter()
            .enumerate()
            .map(|(j, t)| sample_exact(t, 500, StreamKey::shard(seed, j)).unwrap().column(0))
            .collect();
        pie_combine(&draws, &uniform_grid(19)).unwrap()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5).combined, run(6).combined);
}
