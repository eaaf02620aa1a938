mod common;

use std::sync::OnceLock;

use num_complex::Complex64;
use outerfactor::innerouter::{factorize_discrete, FactorizationConfig};
use outerfactor::inputstats::*;
use outerfactor::linalg::{CMat, Mat, Vector};
use outerfactor::simharness::trial_rng;
use outerfactor::statespace::{Domain, StateSpaceModel};
use outerfactor::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use common::*;

fn half_blaschke() -> StateSpaceModel {
    StateSpaceModel::from_zeros_poles(0.5, &[real(2.0)], &[real(0.5)], Domain::DiscreteZ).unwrap()
}

fn flat(dim: usize, level: f64, mean: Vector) -> SignalStats {
    let psd = vec![CMat::identity(dim, dim) * Complex64::new(level, 0.0); 513];
    SignalStats::from_psd(mean, psd, 16).unwrap()
}

fn ar_stats(coeff: &Mat, cov: &Mat, mean: Vector) -> SignalStats {
    let psd = ar_spectrum(std::slice::from_ref(coeff), cov, &frequency_grid(512)).unwrap();
    SignalStats::from_psd(mean, psd, 16).unwrap()
}

fn max_relative_psd_error(a: &SignalStats, b: &SignalStats) -> f64 {
    a.psd.iter().zip(&b.psd).map(|(x, y)| (x - y).norm() / y.norm()).fold(0.0, f64::max)
}

#[test]
fn constant_signal_has_no_fluctuation() {
    let samples = vec![Vector::from_vec(vec![1.5]); 5000];
    let s = estimate_stats(&samples, &PsdConfig::default()).unwrap();
    assert_eq!(s.mean[0], 1.5);
    assert!(s.autocov.iter().all(|r| r[(0, 0)] == 0.0));
    assert!(s.psd.iter().all(|p| p[(0, 0)].norm() == 0.0));
}

#[test]
fn white_noise_autocovariance() {
    let mut rng = trial_rng(31, 0);
    let samples: Vec<Vector> = (0..100_000).map(|_| Vector::from_fn(2, |_, _| rng.sample(StandardNormal))).collect();
    let s = estimate_stats(&samples, &PsdConfig::default()).unwrap();
    assert!((&s.autocov[0] - Mat::identity(2, 2)).amax() < 0.02);
    assert!(s.autocov[1].amax() < 0.02);
}

#[test]
fn ar1_autocovariance_matches_the_closed_form() {
    let mut rng = trial_rng(32, 0);
    let mut x = 0.0;
    let samples: Vec<Vector> = (0..100_500)
        .map(|_| {
            x = 0.8 * x + rng.sample::<f64, _>(StandardNormal);
            Vector::from_element(1, x)
        })
        .skip(500)
        .collect();
    let s = estimate_stats(&samples, &PsdConfig::default()).unwrap();
    for tau in 0..=5 {
        let exact = 0.8f64.powi(tau as i32) / (1.0 - 0.64);
        assert!((s.autocov[tau][(0, 0)] - exact).abs() < 0.05 * exact, "tau {tau}");
    }
}

#[test]
fn all_pass_keeps_white_spectra_flat() {
    let f = push_through_inner(&flat(1, 1.0, Vector::zeros(1)), &half_blaschke()).unwrap();
    assert!(f.psd.iter().all(|p| (p[(0, 0)] - 1.0).norm() < 1e-12));
    assert!((f.autocov[0][(0, 0)] - 1.0).abs() < 1e-12);
}

#[test]
fn means_follow_the_dc_gain() {
    let inner = half_blaschke();
    let f = push_through_inner(&flat(1, 1.0, Vector::from_element(1, 3.0)), &inner).unwrap();
    assert!((f.mean[0] + 3.0).abs() < 1e-12);
    let d = recover_d_stats(&flat(1, 1.0, Vector::from_element(1, -3.0)), &inner).unwrap();
    assert!((d.mean[0] - 3.0).abs() < 1e-12);
}

#[test]
fn constant_orthogonal_inner_is_a_congruence() {
    let (c, s) = (0.6, 0.8);
    let q = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
    let inner = StateSpaceModel::new(Mat::zeros(0, 0), Mat::zeros(0, 2), Mat::zeros(2, 0), q.clone(), Domain::DiscreteZ)
        .unwrap();
    let d = ar_stats(&(Mat::identity(2, 2) * 0.5), &Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]), Vector::from_vec(vec![1.0, 2.0]));
    let f = push_through_inner(&d, &inner).unwrap();
    let qc = q.map(|v| Complex64::new(v, 0.0));
    for (pf, pd) in f.psd.iter().zip(&d.psd) {
        assert!((pf - &qc * pd * qc.transpose()).norm() < 1e-12);
    }
    assert!((&f.mean - &q * &d.mean).norm() < 1e-12);
}

#[test]
fn mismatched_statistics_are_rejected() {
    let inner = half_blaschke();
    assert!(matches!(push_through_inner(&flat(2, 1.0, Vector::zeros(2)), &inner), Err(Error::GridMismatch(_))));
    let mut skewed = flat(1, 1.0, Vector::zeros(1));
    skewed.frequencies[3] += 1e-3;
    assert!(matches!(recover_d_stats(&skewed, &inner), Err(Error::GridMismatch(_))));
    let mut short = flat(1, 1.0, Vector::zeros(1));
    short.psd.pop();
    assert!(matches!(push_through_inner(&short, &inner), Err(Error::GridMismatch(_))));
}

fn suite_inners() -> &'static Vec<StateSpaceModel> {
    static INNERS: OnceLock<Vec<StateSpaceModel>> = OnceLock::new();
    INNERS.get_or_init(|| {
        random_suite()
            .iter()
            .map(|(plant, _)| factorize_discrete(plant, &FactorizationConfig::default()).unwrap().inner)
            .collect()
    })
}

fn random_d_stats(m: usize, coeffs: &[f64], mean: &[f64]) -> SignalStats {
    let a = Mat::from_fn(m, m, |i, j| coeffs[i * 2 + j]);
    let radius = a.norm();
    let a = if radius > 0.9 { a * (0.9 / radius) } else { a };
    let l = Mat::from_fn(m, m, |i, j| coeffs[4 + i * 2 + j]);
    let cov = &l * l.transpose() + Mat::identity(m, m) * 0.1;
    ar_stats(&a, &cov, Vector::from_fn(m, |i, _| mean[i]))
}

#[test]
fn trace_is_preserved_by_inner_factors() {
    for inner in suite_inners() {
        let m = inner.inputs();
        let d = random_d_stats(m, &[0.5, 0.2, -0.1, 0.3, 1.0, 0.0, 0.4, 0.8], &[1.0, -1.0]);
        let f = push_through_inner(&d, inner).unwrap();
        assert!((f.trace_integral() - d.trace_integral()).abs() < 1e-6 * d.trace_integral());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn push_then_recover_is_the_identity(
        which in 0usize..20,
        coeffs in prop::collection::vec(-1.0f64..1.0, 8),
        mean in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let inner = &suite_inners()[which];
        let d = random_d_stats(inner.inputs(), &coeffs, &mean);
        let f = push_through_inner(&d, inner).unwrap();
        let back = recover_d_stats(&f, inner).unwrap();
        prop_assert!(max_relative_psd_error(&back, &d) < 1e-8);
        prop_assert!((&back.mean - &d.mean).norm() < 1e-8 * (1.0 + d.mean.norm()));
    }

    #[test]
    fn both_maps_keep_spectra_hermitian_psd(
        which in 0usize..20,
        coeffs in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let inner = &suite_inners()[which];
        let d = random_d_stats(inner.inputs(), &coeffs, &[0.0, 0.0]);
        let f = push_through_inner(&d, inner).unwrap();
        let back = recover_d_stats(&f, inner).unwrap();
        for phi in f.psd.iter().chain(&back.psd) {
            let scale = phi.norm();
            prop_assert!((phi - phi.adjoint()).norm() < 1e-12 * scale);
            let low = phi.clone().symmetric_eigenvalues().min();
            prop_assert!(low > -1e-10 * scale);
        }
    }
}
