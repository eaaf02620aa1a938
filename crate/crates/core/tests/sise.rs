mod common;

use outerfactor::innerouter::{factorize_discrete, FactorizationConfig};
use outerfactor::linalg::{Mat, Vector};
use outerfactor::simharness::trial_rng;
use outerfactor::sise::*;
use outerfactor::statespace::{Domain, StateSpaceModel};
use outerfactor::Error;
use rand::Rng;
use rand_distr::StandardNormal;

use common::*;

fn first_order() -> StateSpaceModel {
    let s = |v: f64| Mat::from_element(1, 1, v);
    StateSpaceModel::new(s(0.5), s(1.0), s(1.0), s(0.0), Domain::DiscreteZ).unwrap()
}

fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

#[test]
fn init_checks_the_input_rank() {
    assert!(sise_init(&first_order(), v1(0.0), Mat::zeros(1, 1)).is_ok());
    let blind = StateSpaceModel::new(
        Mat::identity(2, 2) * 0.5,
        Mat::from_column_slice(2, 1, &[0.0, 1.0]),
        Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        Mat::zeros(1, 1),
        Domain::DiscreteZ,
    )
    .unwrap();
    assert!(matches!(
        sise_init(&blind, Vector::zeros(2), Mat::identity(2, 2)),
        Err(Error::RankCGDeficient { rank: 0, m: 1 })
    ));
    let biproper = scalar_outer();
    assert!(matches!(sise_init(&biproper, Vector::zeros(3), Mat::identity(3, 3)), Err(Error::AssumptionHNotZero)));
    let outer = factorize_discrete(&single_zero_plant(), &FactorizationConfig::default()).unwrap().outer;
    assert!(sise_init(&outer, Vector::zeros(2), Mat::identity(2, 2)).is_ok());
}

#[test]
fn first_step_by_hand() {
    let mut f = sise_init(&first_order(), v1(0.0), Mat::zeros(1, 1)).unwrap();
    let step = f.step(&v1(2.0)).unwrap();
    assert!((step.d_hat[0] - 2.0).abs() < 1e-15);
    assert!((step.x_hat[0] - 2.0).abs() < 1e-15);
    assert!((step.p_trace - 1.0).abs() < 1e-15);
    let st = f.state();
    assert_eq!(st.last_x[(0, 0)], 0.0);
    assert_eq!(st.last_k[(0, 0)], 0.0);
    assert_eq!(st.last_m[(0, 0)], 1.0);
}

#[test]
fn wrong_measurement_length_is_rejected() {
    let mut f = sise_init(&first_order(), v1(0.0), Mat::zeros(1, 1)).unwrap();
    assert!(matches!(f.step(&Vector::zeros(2)), Err(Error::DimensionMismatch(_))));
}

#[test]
fn empty_measurements_give_an_empty_report() {
    let r = run_sise(&first_order(), &[], &SiseInit::standard(1)).unwrap();
    assert!(r.x_hat.is_empty() && r.d_hat.is_empty() && !r.diverged);
}

/// Minimum-phase `(z − 0.5)/((z − 0.3)(z − 0.6))`.
fn minimum_phase() -> StateSpaceModel {
    StateSpaceModel::from_zeros_poles(1.0, &[real(0.5)], &[real(0.3), real(0.6)], Domain::DiscreteZ).unwrap()
}

#[test]
fn noiseless_minimum_phase_plant_is_tracked_exactly() {
    let plant = minimum_phase();
    let x0 = Vector::from_vec(vec![3.0, -1.0]);
    let (states, outputs) = plant.simulate(&x0, &vec![v1(0.0); 200]);
    let r = run_sise(&plant, &outputs[1..], &SiseInit::standard(2)).unwrap();
    let last = r.x_hat.len() - 1;
    assert!((&r.x_hat[last] - &states[last + 1]).norm() < 1e-8);
    assert!(r.d_hat[last].norm() < 1e-8);
}

#[test]
fn noiseless_inversion_recovers_the_input() {
    let plant = minimum_phase().with_noise(Mat::zeros(2, 2), Mat::identity(1, 1) * 1e-10).unwrap();
    let mut rng = trial_rng(4, 0);
    let d: Vec<Vector> = (0..300).map(|_| v1(rng.sample(StandardNormal))).collect();
    let (_, outputs) = plant.simulate(&Vector::from_vec(vec![1.0, 2.0]), &d);
    let r = run_sise(&plant, &outputs[1..], &SiseInit::standard(2)).unwrap();
    for (k, (dh, dk)) in r.d_hat.iter().zip(&d).enumerate().skip(100) {
        assert!((dh - dk).norm() < 1e-6, "step {k}");
    }
}

#[test]
fn unstable_zero_makes_the_covariance_blow_up() {
    let plant = single_zero_plant().with_noise(Mat::identity(2, 2) * 0.1, Mat::identity(1, 1)).unwrap();
    let y: Vec<Vector> = (0..200).map(|k| v1((k as f64 * 0.3).sin())).collect();
    let r = run_sise(&plant, &y, &SiseInit::standard(2)).unwrap();
    assert!(r.diverged);
    assert!(r.divergence_onset.unwrap() < 200);
    let finite: Vec<f64> = r.p_trace.iter().copied().take_while(|v| *v < f64::MAX).collect();
    assert!(finite.windows(10).step_by(10).all(|w| w[9] > w[0]));
}

#[test]
fn outer_factor_covariance_settles() {
    let plant = single_zero_plant().with_noise(Mat::identity(2, 2) * 0.1, Mat::identity(1, 1)).unwrap();
    let outer = factorize_discrete(&plant, &FactorizationConfig::default()).unwrap().outer;
    let mut rng = trial_rng(8, 0);
    let y: Vec<Vector> = (0..10_000).map(|_| v1(rng.sample(StandardNormal))).collect();
    let r = run_sise(&outer, &y, &SiseInit::standard(2)).unwrap();
    assert!(!r.diverged);
    let last = *r.p_trace.last().unwrap();
    let tail = &r.p_trace[r.p_trace.len() - 100..];
    assert!(tail.iter().all(|v| (v - last).abs() <= 1e-8 * last));
}

#[test]
fn outer_factors_of_random_plants_are_stable_for_sise() {
    let mut rng = trial_rng(12, 0);
    for (i, (plant, _)) in random_suite().iter().enumerate().filter(|(i, _)| i % 2 == 0) {
        let outer = factorize_discrete(plant, &FactorizationConfig::default()).unwrap().outer;
        let y: Vec<Vector> = (0..2000)
            .map(|_| Vector::from_fn(plant.outputs(), |_, _| rng.sample(StandardNormal)))
            .collect();
        let r = run_sise(&outer, &y, &SiseInit::standard(plant.n())).unwrap();
        assert!(!r.diverged, "#{i}");
        let on_plant = run_sise(plant, &y, &SiseInit::standard(plant.n())).unwrap();
        assert!(on_plant.diverged, "#{i}");
    }
}

#[test]
fn poorly_conditioned_input_map_is_flagged() {
    let plant = StateSpaceModel::new(
        Mat::identity(2, 2) * 0.5,
        Mat::identity(2, 2),
        Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-7]),
        Mat::zeros(2, 2),
        Domain::DiscreteZ,
    )
    .unwrap();
    let f = sise_init(&plant, Vector::zeros(2), Mat::identity(2, 2)).unwrap();
    assert!(f.warning().is_some());
}
