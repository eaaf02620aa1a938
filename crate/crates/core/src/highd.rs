//! Kalman filtering with an inflated input covariance.
//!
//! The unknown input is modelled as white noise with covariance `D`, so the
//! filter runs on process covariance `G D Gᵀ + Q`. As `D` grows along a
//! full-rank direction the filter approaches the estimator built on the outer
//! factor of the plant.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{complex_solve, solve, symmetrize, to_complex, CMat, Mat, Vector};
use crate::matrixeq::{solve_dare, RiccatiMethod};
use crate::statespace::{Domain, StateSpaceModel};

/// `G D Gᵀ + Q`.
pub fn inflated_process_covariance(sys: &StateSpaceModel, d_cov: &Mat) -> Result<Mat> {
    let m = sys.inputs();
    if d_cov.shape() != (m, m) {
        return Err(Error::DimensionMismatch("input covariance must be m x m".into()));
    }
    Ok(symmetrize(&(sys.g() * d_cov * sys.g().transpose() + sys.q_proc())))
}

/// Steady-state filter quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanSteadyState {
    /// Prediction error covariance `Σ`.
    pub sigma_pred: Mat,
    /// Predictor gain `L = AΣCᵀ(CΣCᵀ + R)⁻¹`.
    pub gain: Mat,
    /// Measurement-update gain `ΣCᵀ(CΣCᵀ + R)⁻¹`.
    pub filter_gain: Mat,
    /// Filtered covariance `Σ − ΣCᵀ(CΣCᵀ + R)⁻¹CΣ`.
    pub s_filt: Mat,
    pub method: RiccatiMethod,
    /// Factor the Riccati equation was divided by before solving.
    pub scale: f64,
    /// Riccati residual relative to `1 + ‖Σ‖_F`.
    pub relative_residual: f64,
    pub closed_loop_radius: f64,
}

/// Steady-state filter for process covariance `G D Gᵀ + Q`.
pub fn kf_highd_steady(sys: &StateSpaceModel, d_cov: &Mat) -> Result<KalmanSteadyState> {
    sys.require_domain(Domain::DiscreteZ)?;
    let q = inflated_process_covariance(sys, d_cov)?;
    let sol = solve_dare(sys.a(), sys.c(), &q, sys.r_meas())?;
    let sigma = sol.x;
    let c = sys.c();
    let innov = c * &sigma * c.transpose() + sys.r_meas();
    let filter_gain = solve(&innov, &(c * &sigma)).ok_or(Error::InnovationGramSingular)?.transpose();
    let s_filt = symmetrize(&(&sigma - &filter_gain * c * &sigma));
    Ok(KalmanSteadyState {
        relative_residual: sol.residual_norm / (1.0 + sigma.norm()),
        sigma_pred: sigma,
        gain: sol.gain,
        filter_gain,
        s_filt,
        method: sol.method,
        scale: sol.scale,
        closed_loop_radius: sol.closed_loop,
    })
}

#[derive(Debug, Clone)]
enum Covariance {
    Steady(Mat),
    TimeVarying(Mat),
}

/// Kalman filter in predictor/corrector form. Single owner.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    a: Mat,
    c: Mat,
    q: Mat,
    r: Mat,
    x_pred: Vector,
    cov: Covariance,
}

/// Output of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanStep {
    /// `x̂_{t|t}`.
    pub x_hat: Vector,
    /// `y_t − C x̂_{t|t−1}`.
    pub innovation: Vector,
}

impl KalmanFilter {
    /// Steady-state filter started from `x̂_{0|0} = x0_hat`.
    pub fn steady(sys: &StateSpaceModel, d_cov: &Mat, x0_hat: &Vector) -> Result<Self> {
        let steady = kf_highd_steady(sys, d_cov)?;
        Self::build(sys, d_cov, x0_hat, Covariance::Steady(steady.filter_gain))
    }

    /// Time-varying filter started from `x̂_{0|0} = x0_hat`, `P_{0|0} = p0`.
    pub fn time_varying(sys: &StateSpaceModel, d_cov: &Mat, x0_hat: &Vector, p0: &Mat) -> Result<Self> {
        let q = inflated_process_covariance(sys, d_cov)?;
        let p_pred = symmetrize(&(sys.a() * p0 * sys.a().transpose() + q));
        Self::build(sys, d_cov, x0_hat, Covariance::TimeVarying(p_pred))
    }

    fn build(sys: &StateSpaceModel, d_cov: &Mat, x0_hat: &Vector, cov: Covariance) -> Result<Self> {
        sys.require_domain(Domain::DiscreteZ)?;
        if x0_hat.len() != sys.n() {
            return Err(Error::DimensionMismatch("initial state".into()));
        }
        Ok(Self {
            a: sys.a().clone(),
            c: sys.c().clone(),
            q: inflated_process_covariance(sys, d_cov)?,
            r: sys.r_meas().clone(),
            x_pred: sys.a() * x0_hat,
            cov,
        })
    }

    /// Current prediction `x̂_{t+1|t}`.
    pub fn prediction(&self) -> &Vector {
        &self.x_pred
    }

    /// Current prediction covariance for the time-varying filter.
    pub fn prediction_covariance(&self) -> Option<&Mat> {
        match &self.cov {
            Covariance::TimeVarying(p) => Some(p),
            Covariance::Steady(_) => None,
        }
    }

    pub fn step(&mut self, y: &Vector) -> Result<KalmanStep> {
        if y.len() != self.c.nrows() {
            return Err(Error::DimensionMismatch("measurement length".into()));
        }
        let innovation = y - &self.c * &self.x_pred;
        let gain = match &self.cov {
            Covariance::Steady(k) => k.clone(),
            Covariance::TimeVarying(p) => {
                let s = &self.c * p * self.c.transpose() + &self.r;
                solve(&s, &(&self.c * p)).ok_or(Error::InnovationGramSingular)?.transpose()
            }
        };
        let x_hat = &self.x_pred + &gain * &innovation;
        if let Covariance::TimeVarying(p) = &mut self.cov {
            let n = self.a.nrows();
            let i_kc = Mat::identity(n, n) - &gain * &self.c;
            let filt = &i_kc * &*p * i_kc.transpose() + &gain * &self.r * gain.transpose();
            *p = symmetrize(&(&self.a * filt * self.a.transpose() + &self.q));
        }
        self.x_pred = &self.a * &x_hat;
        Ok(KalmanStep { x_hat, innovation })
    }
}

/// Both residuals are maxima over the grid. `edr_relative` divides each
/// pointwise difference by `1 + ‖left side‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnDifferenceReport {
    pub edr_absolute: f64,
    pub edr_relative: f64,
    /// `‖[I + C(zI−A)⁻¹L]⁻¹ − (I − C(zI−A+LC)⁻¹L)‖_F`.
    pub facto_residual: f64,
}

fn resolvent(a: &Mat, z: Complex64) -> Option<CMat> {
    let n = a.nrows();
    let mut m = -to_complex(a);
    for i in 0..n {
        m[(i, i)] += z;
    }
    complex_solve(&m, &CMat::identity(n, n))
}

/// Checks the spectral identity
/// `R + C(zI−A)⁻¹Q(z⁻¹I−Aᵀ)⁻¹Cᵀ = [I + C(zI−A)⁻¹L](CΣCᵀ+R)[I + Lᵀ(z⁻¹I−Aᵀ)⁻¹Cᵀ]`
/// and the inverse formula for the return difference at each point.
pub fn verify_return_difference(
    a: &Mat,
    c: &Mat,
    q: &Mat,
    r: &Mat,
    l: &Mat,
    sigma: &Mat,
    points: &[Complex64],
) -> Result<ReturnDifferenceReport> {
    let p = c.nrows();
    let (cc, qc, rc, lc) = (to_complex(c), to_complex(q), to_complex(r), to_complex(l));
    let mid = to_complex(&(c * sigma * c.transpose() + r));
    let eye = CMat::identity(p, p);
    let closed = a - l * c;
    let mut report = ReturnDifferenceReport { edr_absolute: 0.0, edr_relative: 0.0, facto_residual: 0.0 };
    for &z in points {
        let fwd = resolvent(a, z).ok_or(Error::NearPole)?;
        let bwd = resolvent(&a.transpose(), z.inv()).ok_or(Error::NearPole)?;
        let lhs = &rc + &cc * &fwd * &qc * &bwd * cc.transpose();
        let left = &eye + &cc * &fwd * &lc;
        let right = &eye + lc.transpose() * &bwd * cc.transpose();
        let rhs = &left * &mid * right;
        let diff = (&lhs - rhs).norm();
        report.edr_absolute = report.edr_absolute.max(diff);
        report.edr_relative = report.edr_relative.max(diff / (1.0 + lhs.norm()));
        let inv_left = complex_solve(&left, &eye).ok_or(Error::NearPole)?;
        let closed_res = resolvent(&closed, z).ok_or(Error::NearPole)?;
        let formula = &eye - &cc * closed_res * &lc;
        report.facto_residual = report.facto_residual.max((inv_left - formula).norm());
    }
    Ok(report)
}

/// `I + C(zI − A)⁻¹L` as a system (the return difference of the predictor).
pub fn return_difference_system(a: &Mat, c: &Mat, l: &Mat) -> Result<StateSpaceModel> {
    let p = c.nrows();
    StateSpaceModel::new(a.clone(), l.clone(), c.clone(), Mat::identity(p, p), Domain::DiscreteZ)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub gain: Mat,
    pub sigma: Mat,
    pub filter_gain: Mat,
    pub relative_residual: f64,
}

/// Steady-state filters for `D = ε⁻¹ D₀` over decreasing `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSweep {
    pub entries: Vec<SweepEntry>,
    /// `‖L_k − L_{k+1}‖_F / ‖L_{k+1}‖_F` for successive entries.
    pub successive_gain_changes: Vec<f64>,
}

/// Default `ε` values.
pub const DEFAULT_EPSILONS: [f64; 4] = [1e-2, 1e-4, 1e-6, 1e-8];

pub fn epsilon_sweep(sys: &StateSpaceModel, d0: &Mat, epsilons: &[f64]) -> Result<EpsilonSweep> {
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput("epsilons must be positive and strictly decreasing".into()));
    }
    let entries = epsilons
        .iter()
        .map(|&epsilon| {
            let ss = kf_highd_steady(sys, &(d0 / epsilon))?;
            Ok(SweepEntry {
                epsilon,
                gain: ss.gain,
                sigma: ss.sigma_pred,
                filter_gain: ss.filter_gain,
                relative_residual: ss.relative_residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let successive_gain_changes = entries
        .windows(2)
        .map(|w| (&w[0].gain - &w[1].gain).norm() / w[1].gain.norm().max(f64::MIN_POSITIVE))
        .collect();
    Ok(EpsilonSweep { entries, successive_gain_changes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_plant() -> StateSpaceModel {
        let one = Mat::from_element(1, 1, 1.0);
        StateSpaceModel::new(Mat::from_element(1, 1, 0.5), one.clone(), one.clone(), Mat::zeros(1, 1), Domain::DiscreteZ)
            .unwrap()
    }

    #[test]
    fn zero_input_covariance_is_plain_filter() {
        let sys = scalar_plant().with_noise(Mat::from_element(1, 1, 1.0), Mat::identity(1, 1)).unwrap();
        let ss = kf_highd_steady(&sys, &Mat::zeros(1, 1)).unwrap();
        let direct = solve_dare(sys.a(), sys.c(), sys.q_proc(), sys.r_meas()).unwrap();
        assert!((ss.sigma_pred - direct.x).norm() < 1e-14);
    }

    #[test]
    fn large_input_covariance_gain_tends_to_one() {
        let ss = kf_highd_steady(&scalar_plant(), &Mat::from_element(1, 1, 1e6)).unwrap();
        assert!((ss.filter_gain[(0, 0)] - 1.0).abs() < 1e-5);
        assert!(ss.scale > 1.0);
    }

    #[test]
    fn zero_data_gives_zero_estimates() {
        let mut f = KalmanFilter::steady(&scalar_plant(), &Mat::from_element(1, 1, 10.0), &Vector::zeros(1)).unwrap();
        for _ in 0..5 {
            let s = f.step(&Vector::zeros(1)).unwrap();
            assert_eq!(s.x_hat[0], 0.0);
        }
    }

    #[test]
    fn trivial_return_difference() {
        let a = Mat::from_element(1, 1, 0.5);
        let c = Mat::from_element(1, 1, 1.0);
        let r = Mat::from_element(1, 1, 2.0);
        let z = Mat::zeros(1, 1);
        let pts = [Complex64::from_polar(1.0, 0.3)];
        let rep = verify_return_difference(&a, &c, &z, &r, &z, &z, &pts).unwrap();
        assert_eq!(rep.edr_absolute, 0.0);
        assert_eq!(rep.facto_residual, 0.0);
    }

    #[test]
    fn sweep_requires_decreasing_epsilons() {
        assert!(epsilon_sweep(&scalar_plant(), &Mat::identity(1, 1), &[1e-4, 1e-2]).is_err());
    }
}
