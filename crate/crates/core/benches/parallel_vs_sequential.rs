use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;
use outerfactor::linalg::Mat;
use outerfactor::par::Execution;
use outerfactor::simharness::{random_regular_plant, trial_rng, EstimatorSelection, RandomPlantSpec, ScenarioConfig};
use outerfactor::statespace::{Domain, FrequencyGrid, StateSpaceModel};
use std::hint::black_box;

fn single_zero_plant() -> StateSpaceModel {
    let re = |v: f64| Complex64::new(v, 0.0);
    StateSpaceModel::from_zeros_poles(1.0, &[re(2.0)], &[re(0.3), re(0.6)], Domain::DiscreteZ).unwrap()
}

fn monte_carlo(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::new(single_zero_plant(), 1000, 42);
    cfg.q_proc = Some(Mat::identity(2, 2) * 0.1);
    cfg.r_meas = Some(Mat::identity(1, 1));
    cfg.trials = 64;
    cfg.estimators = EstimatorSelection { sise_on_plant: false, ..EstimatorSelection::default() };

    let mut group = c.benchmark_group("monte_carlo_64_trials");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        cfg.execution = exec;
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| outerfactor::simharness::run_experiment(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

fn frequency_grid(c: &mut Criterion) {
    let mut rng = trial_rng(7, 0);
    let spec = RandomPlantSpec { max_states: 5, outputs: 3, inputs: 2, unstable_zeros: 2, strictly_proper: true };
    let plant = random_regular_plant(&mut rng, &spec).unwrap();
    let grid = FrequencyGrid::full_unit_circle(8192);

    let mut group = c.benchmark_group("frequency_response_8192");
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| plant.frequency_response_with(black_box(grid.points()), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, frequency_grid);
criterion_main!(benches);
