#![allow(dead_code)]

use num_complex::Complex64;
use outerfactor::simharness::{random_regular_plant, trial_rng, RandomPlantSpec};
use outerfactor::statespace::{Domain, StateSpaceModel};

pub fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// `(z−2)(z−3)(z−0.9)(z−0.8) / ((z−½)(z−0.7)(z+j½)(z−j½))`, which carries a
/// free inner factor.
pub fn scalar_plant() -> StateSpaceModel {
    StateSpaceModel::from_zeros_poles(
        1.0,
        &[real(2.0), real(3.0), real(0.9), real(0.8)],
        &[real(0.5), real(0.7), Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5)],
        Domain::DiscreteZ,
    )
    .unwrap()
}

/// Hand-derived outer factor of [`scalar_plant`].
pub fn scalar_outer() -> StateSpaceModel {
    StateSpaceModel::from_zeros_poles(
        6.0,
        &[real(1.0 / 3.0), real(0.9), real(0.8)],
        &[real(0.7), Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5)],
        Domain::DiscreteZ,
    )
    .unwrap()
}

/// Hand-derived inner factor of [`scalar_plant`].
pub fn scalar_inner() -> StateSpaceModel {
    StateSpaceModel::from_zeros_poles(1.0 / 6.0, &[real(2.0), real(3.0)], &[real(0.5), real(1.0 / 3.0)], Domain::DiscreteZ)
        .unwrap()
}

/// Regular, strictly proper plant with one unstable zero:
/// `(z−2) / ((z−0.3)(z−0.6))`.
pub fn single_zero_plant() -> StateSpaceModel {
    StateSpaceModel::from_zeros_poles(1.0, &[real(2.0)], &[real(0.3), real(0.6)], Domain::DiscreteZ).unwrap()
}

/// Twenty seeded random regular plants with their number of unstable
/// zeros. Shapes cycle through (p, m, zeros); odd entries have a full-rank
/// feedthrough.
pub fn random_suite() -> Vec<(StateSpaceModel, usize)> {
    let shapes = [(1, 1, 1), (2, 1, 1), (2, 2, 1), (3, 2, 2), (2, 2, 2)];
    let mut rng = trial_rng(2024, 0);
    (0..20)
        .map(|i| {
            let (outputs, inputs, unstable_zeros) = shapes[i % shapes.len()];
            let spec = RandomPlantSpec { max_states: 5, outputs, inputs, unstable_zeros, strictly_proper: i % 2 == 0 };
            (random_regular_plant(&mut rng, &spec).unwrap(), unstable_zeros)
        })
        .collect()
}

/// Seeded 2×2 strictly proper plant with one unstable zero.
pub fn mimo_plant(seed: u64) -> StateSpaceModel {
    let mut rng = trial_rng(seed, 0);
    let spec = RandomPlantSpec { max_states: 4, outputs: 2, inputs: 2, unstable_zeros: 1, strictly_proper: true };
    random_regular_plant(&mut rng, &spec).unwrap()
}

/// Seeded 2×2 strictly proper minimum-phase plant.
pub fn mimo_minimum_phase(seed: u64) -> StateSpaceModel {
    let mut rng = trial_rng(seed, 0);
    let spec = RandomPlantSpec { max_states: 4, outputs: 2, inputs: 2, unstable_zeros: 0, strictly_proper: true };
    random_regular_plant(&mut rng, &spec).unwrap()
}
