mod common;

use outerfactor::innerouter::{factorize_discrete, FactorizationConfig};
use outerfactor::linalg::{Mat, Vector};
use outerfactor::par::Execution;
use outerfactor::simharness::*;
use outerfactor::statespace::{Domain, StateSpaceModel};
use outerfactor::Error;

use common::*;

fn minimum_phase() -> StateSpaceModel {
    StateSpaceModel::from_zeros_poles(1.0, &[real(0.5)], &[real(0.3), real(0.6)], Domain::DiscreteZ).unwrap()
}

fn noiseless(plant: StateSpaceModel, horizon: usize) -> ScenarioConfig {
    let (n, p, m) = (plant.n(), plant.outputs(), plant.inputs());
    let mut cfg = ScenarioConfig::new(plant, horizon, 1);
    cfg.q_proc = Some(Mat::zeros(n, n));
    cfg.r_meas = Some(Mat::zeros(p, p));
    cfg.input = InputModel::zero(m);
    cfg.estimators = EstimatorSelection { sise_on_plant: false, sise_on_outer: false, highd: false, stats: false };
    cfg
}

fn noisy(plant: StateSpaceModel, horizon: usize, seed: u64) -> ScenarioConfig {
    let (n, p) = (plant.n(), plant.outputs());
    let mut cfg = ScenarioConfig::new(plant, horizon, seed);
    cfg.q_proc = Some(Mat::identity(n, n) * 0.1);
    cfg.r_meas = Some(Mat::identity(p, p));
    cfg
}

#[test]
fn free_response_is_powers_of_a() {
    let plant = single_zero_plant();
    let mut cfg = noiseless(plant.clone(), 50);
    cfg.initial_state = InitialState::Fixed(Vector::from_vec(vec![1.0, 0.0]));
    let traj = simulate_plant(&cfg, 0).unwrap();
    let mut x = Vector::from_vec(vec![1.0, 0.0]);
    for xt in &traj.x {
        assert_eq!(xt, &x);
        x = plant.a() * &x;
    }
}

#[test]
fn same_seed_same_trajectories() {
    let cfg = noisy(single_zero_plant(), 300, 9);
    assert_eq!(simulate_plant(&cfg, 3).unwrap(), simulate_plant(&cfg, 3).unwrap());
    assert_ne!(simulate_plant(&cfg, 3).unwrap().y, simulate_plant(&cfg, 4).unwrap().y);
}

#[test]
fn process_noise_has_the_configured_covariance() {
    let mut cfg = noiseless(single_zero_plant(), 100_000);
    let q = Mat::from_diagonal(&Vector::from_vec(vec![0.5, 2.0]));
    cfg.q_proc = Some(q.clone());
    let traj = simulate_plant(&cfg, 0).unwrap();
    let t = traj.w.len() as f64;
    let cov = traj.w.iter().fold(Mat::zeros(2, 2), |acc, w| acc + w * w.transpose()) / t;
    for i in 0..2 {
        assert!((cov[(i, i)] - q[(i, i)]).abs() < 0.03 * q[(i, i)]);
    }
    assert!(cov[(0, 1)].abs() < 0.03);
}

#[test]
fn cascade_output_equals_plant_output_from_rest() {
    let mut plants = vec![single_zero_plant(), mimo_plant(77)];
    plants.extend(random_suite().into_iter().take(5).map(|(p, _)| p));
    for plant in plants {
        let n = plant.n();
        let mut cfg = noisy(plant, 200, 5);
        cfg.initial_state = InitialState::Fixed(Vector::zeros(n));
        let fac = factorize_discrete(&cfg.effective_plant().unwrap(), &FactorizationConfig::default()).unwrap();
        let traj = simulate_plant(&cfg, 0).unwrap();
        let factored = simulate_factored(&cfg, &fac, &traj).unwrap();
        for (y, yo) in traj.y.iter().zip(&factored.y_outer) {
            assert!((y - yo).norm() < 1e-7 * (1.0 + y.norm()));
        }
    }
}

#[test]
fn factors_must_match_the_plant() {
    let cfg = noisy(single_zero_plant(), 50, 1);
    let fac = factorize_discrete(&mimo_plant(77), &FactorizationConfig::default()).unwrap();
    let traj = simulate_plant(&cfg, 0).unwrap();
    assert!(matches!(simulate_factored(&cfg, &fac, &traj), Err(Error::DimensionMismatch(_))));
}

#[test]
fn minimum_phase_factor_tracks_the_plant_state() {
    let cfg = noisy(minimum_phase(), 300, 2);
    let fac = factorize_discrete(&cfg.effective_plant().unwrap(), &FactorizationConfig::default()).unwrap();
    assert_eq!(fac.ell, 0);
    let traj = simulate_plant(&cfg, 0).unwrap();
    let factored = simulate_factored(&cfg, &fac, &traj).unwrap();
    let gain = factored.f[10][0] / traj.d[10][0];
    assert!((gain.abs() - 1.0).abs() < 1e-10);
    for (f, d) in factored.f.iter().zip(&traj.d) {
        assert!((f[0] - gain * d[0]).abs() < 1e-10 * (1.0 + d[0].abs()));
    }
    let gap: Vec<f64> = traj.x.iter().zip(&factored.x_outer).map(|(x, xo)| (x - xo).norm()).collect();
    assert!(gap[299] < 1e-10 * gap[0]);
}

fn mismatched_initial_states(plant: StateSpaceModel) -> ScenarioConfig {
    let mut cfg = noisy(plant, 200, 4);
    let m = cfg.plant.inputs();
    cfg.input = InputModel::zero(m);
    cfg.initial_state = InitialState::Fixed(Vector::from_vec(vec![3.0, -2.0]));
    cfg.outer_initial = Some(Vector::from_vec(vec![-1.0, 1.0]));
    cfg.inner_initial = Some(Vector::from_element(1, 4.0));
    cfg.estimators = EstimatorSelection { sise_on_plant: false, sise_on_outer: false, highd: false, stats: false };
    cfg
}

#[test]
fn initial_condition_gap_decays_at_the_slowest_pole() {
    let report = run_experiment(&mismatched_initial_states(single_zero_plant())).unwrap();
    let agg = &report.aggregate;
    assert!((agg.max_eig_a - 0.6).abs() < 1e-12);
    assert!((agg.max_eig_inner - 0.5).abs() < 1e-10);
    assert!(agg.fitted_rate.unwrap() <= agg.max_eig_a + 0.02);
}

#[test]
fn fitted_rate_matches_the_dominant_pole() {
    let plant = StateSpaceModel::from_zeros_poles(1.0, &[real(2.0)], &[real(0.3), real(0.7)], Domain::DiscreteZ).unwrap();
    let report = run_experiment(&mismatched_initial_states(plant)).unwrap();
    let rate = report.aggregate.fitted_rate.unwrap();
    assert!((0.6..=0.75).contains(&rate), "{rate}");
}

#[test]
fn geometric_curve_gives_its_ratio() {
    let curve: Vec<f64> = (0..100).map(|t| 0.9f64.powi(t)).collect();
    assert!((fit_convergence_rate(&curve).unwrap() - 0.9).abs() < 1e-6);
    assert!(matches!(fit_convergence_rate(&[0.0; 40]), Err(Error::CurveTooFlat)));
    assert!(matches!(fit_convergence_rate(&[1.0; 5]), Err(Error::TooFewSamples { .. })));
}

#[test]
fn minimum_phase_plant_needs_no_factorization() {
    let mut cfg = noisy(minimum_phase(), 2000, 6);
    cfg.trials = 3;
    let report = run_experiment(&cfg).unwrap();
    let agg = &report.aggregate;
    assert_eq!((agg.sise_plant_divergences, agg.sise_outer_divergences), (0, 0));
    assert!(agg.max_equivalence_ratio.unwrap() < 1e-2);
    let rep = report.representative.unwrap();
    let (on_plant, on_outer) = (rep.sise_plant.unwrap(), rep.sise_outer.unwrap());
    let last = on_plant.x_hat.len() - 1;
    assert!((&on_plant.x_hat[last] - &on_outer.x_hat[last]).norm() < 1e-6 * (1.0 + on_plant.x_hat[last].norm()));
}

#[test]
fn unstable_zero_separates_the_estimators() {
    let mut cfg = noisy(single_zero_plant(), 2000, 7);
    cfg.trials = 3;
    let report = run_experiment(&cfg).unwrap();
    let agg = &report.aggregate;
    assert_eq!(agg.sise_plant_divergences, 3);
    assert_eq!(agg.sise_outer_divergences, 0);
    assert!(agg.max_equivalence_ratio.unwrap() < 1e-2);
    assert!(report.trials.iter().all(|t| t.errors.is_empty()));
}

#[test]
fn reports_are_reproducible_and_independent_of_scheduling() {
    let mut cfg = noisy(single_zero_plant(), 400, 11);
    cfg.trials = 6;
    cfg.execution = Execution::Sequential;
    let sequential = run_experiment(&cfg).unwrap();
    assert_eq!(sequential, run_experiment(&cfg).unwrap());
    cfg.execution = Execution::Parallel;
    assert_eq!(sequential, run_experiment(&cfg).unwrap());
}

#[test]
fn zero_trials_give_an_empty_aggregate() {
    let mut cfg = noisy(single_zero_plant(), 100, 1);
    cfg.trials = 0;
    let report = run_experiment(&cfg).unwrap();
    assert!(report.trials.is_empty() && report.representative.is_none());
    assert_eq!(report.aggregate.completed, 0);
    assert!(report.aggregate.mean_error.is_none() && report.aggregate.fitted_rate.is_none());
    assert!(report.aggregate.mean_gap_curve.is_empty());
}

#[test]
fn estimators_need_positive_definite_measurement_noise() {
    let mut cfg = noiseless(single_zero_plant(), 100);
    assert!(run_experiment(&cfg).is_ok());
    cfg.estimators.sise_on_outer = true;
    assert!(matches!(run_experiment(&cfg), Err(Error::InvalidInput(_))));
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut cfg = noisy(single_zero_plant(), 10, 1);
    assert!(matches!(run_experiment(&cfg), Err(Error::InvalidInput(_))));
    cfg.horizon = 100;
    cfg.input = InputModel::zero(2);
    assert!(matches!(run_experiment(&cfg), Err(Error::DimensionMismatch(_))));
}
