//! Simultaneous input and state estimation for plants with `H = 0` and
//! `rank(CG) = m`.
//!
//! Each measurement `y_t` yields the filtered state `x̂_{t|t}` and the
//! one-step-delayed input estimate `d̂_{t−1|t}`.

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, singular_values, solve, symmetrize, Mat, Vector, RANK_TOL};
use crate::statespace::{Domain, StateSpaceModel};

/// Trace/state-norm level beyond which a run is flagged as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e12;
/// `σ_min(CG)/σ_max(CG)` below this adds a conditioning warning to reports.
pub const CONDITIONING_WARNING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SiseFilterState {
    /// `x̂_{t|t}`.
    pub x_hat: Vector,
    /// Filtered covariance `P_t`.
    pub p_filt: Mat,
    /// Number of measurements processed.
    pub t: usize,
    /// `d̂_{t−1|t}`.
    pub last_d_hat: Vector,
    /// Predicted covariance `X_t`.
    pub last_x: Mat,
    /// State gain `K_t`.
    pub last_k: Mat,
    /// Input gain `M_t`.
    pub last_m: Mat,
}

/// Output of one recursion step.
#[derive(Debug, Clone, PartialEq)]
pub struct SiseStep {
    pub d_hat: Vector,
    pub x_hat: Vector,
    pub p_trace: f64,
    /// The guard has been exceeded at this or an earlier step.
    pub diverged: bool,
}

/// A filter bound to one plant. Single owner; independent filters can run on
/// different threads.
#[derive(Debug, Clone)]
pub struct SiseFilter {
    a: Mat,
    g: Mat,
    c: Mat,
    q: Mat,
    r: Mat,
    state: SiseFilterState,
    warning: Option<String>,
    divergence_onset: Option<usize>,
}

/// Prepares a filter at `t = 0` with `x̂_{0|0} = x0_hat` and `P_0 = p0`.
pub fn sise_init(sys: &StateSpaceModel, x0_hat: Vector, p0: Mat) -> Result<SiseFilter> {
    sys.require_domain(Domain::DiscreteZ)?;
    let (n, m, p) = (sys.n(), sys.inputs(), sys.outputs());
    if x0_hat.len() != n || p0.shape() != (n, n) {
        return Err(Error::DimensionMismatch("initial state and covariance must match the plant".into()));
    }
    let scale = 1.0 + sys.g().norm() * sys.c().norm();
    if sys.h().norm() > 1e-12 * scale {
        return Err(Error::AssumptionHNotZero);
    }
    let cg = sys.c() * sys.g();
    let rank = numerical_rank(&cg, RANK_TOL);
    if rank < m {
        return Err(Error::RankCGDeficient { rank, m });
    }
    let s = singular_values(&cg);
    let warning = (m > 0 && s[m - 1] < CONDITIONING_WARNING * s[0])
        .then(|| format!("CG is poorly conditioned: sigma_min/sigma_max = {:.3e}", s[m - 1] / s[0]));
    Ok(SiseFilter {
        a: sys.a().clone(),
        g: sys.g().clone(),
        c: sys.c().clone(),
        q: sys.q_proc().clone(),
        r: sys.r_meas().clone(),
        state: SiseFilterState {
            x_hat: x0_hat,
            p_filt: p0,
            t: 0,
            last_d_hat: Vector::zeros(m),
            last_x: Mat::zeros(n, n),
            last_k: Mat::zeros(n, p),
            last_m: Mat::zeros(m, p),
        },
        warning,
        divergence_onset: None,
    })
}

impl SiseFilter {
    pub fn state(&self) -> &SiseFilterState {
        &self.state
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Index (number of measurements processed) at which the guard first
    /// tripped.
    pub fn divergence_onset(&self) -> Option<usize> {
        self.divergence_onset
    }

    /// Processes `y_t`.
    pub fn step(&mut self, y: &Vector) -> Result<SiseStep> {
        if y.len() != self.c.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "measurement has {} entries, expected {}",
                y.len(),
                self.c.nrows()
            )));
        }
        let (a, g, c, r) = (&self.a, &self.g, &self.c, &self.r);
        let n = a.nrows();
        let eye = Mat::identity(n, n);
        let st = &self.state;

        let x = a * &st.p_filt * a.transpose() + &self.q;
        let innov = c * &x * c.transpose() + r;
        let innov_inv_c = solve(&innov, c).ok_or(Error::InnovationGramSingular)?;
        let k = &x * c.transpose() * solve(&innov, &Mat::identity(r.nrows(), r.nrows()))
            .ok_or(Error::InnovationGramSingular)?;
        let gt_ct_sinv = (innov_inv_c * g).transpose();
        let info = &gt_ct_sinv * c * g;
        let m = solve(&info, &gt_ct_sinv).ok_or(Error::InnovationGramSingular)?;
        let i_gmc = &eye - g * &m * c;
        // Symmetric in exact arithmetic; rounding asymmetry would otherwise
        // grow through unstable modes of (I − GMC)A.
        let p = symmetrize(
            &((&eye - &k * c) * (&i_gmc * &x * i_gmc.transpose() + g * &m * r * m.transpose() * g.transpose())
                + &k * r * m.transpose() * g.transpose()),
        );

        let predicted = c * a * &st.x_hat;
        let d_hat = &m * (y - &predicted);
        let x_hat = a * &st.x_hat + g * &d_hat + &k * (y - &predicted - c * g * &d_hat);

        let p_trace = p.trace();
        let t = st.t + 1;
        let blown = !(p_trace.abs() <= DIVERGENCE_GUARD) || !(x_hat.norm() <= DIVERGENCE_GUARD);
        if blown && self.divergence_onset.is_none() {
            self.divergence_onset = Some(t);
        }
        self.state = SiseFilterState {
            x_hat: x_hat.clone(),
            p_filt: p,
            t,
            last_d_hat: d_hat.clone(),
            last_x: x,
            last_k: k,
            last_m: m,
        };
        Ok(SiseStep {
            d_hat,
            x_hat,
            p_trace,
            diverged: self.divergence_onset.is_some(),
        })
    }
}

/// Initial estimate and covariance for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SiseInit {
    pub x0_hat: Vector,
    pub p0: Mat,
}

impl SiseInit {
    /// Zero initial estimate with `P_0 = I`.
    pub fn standard(n: usize) -> Self {
        Self { x0_hat: Vector::zeros(n), p0: Mat::identity(n, n) }
    }
}

/// Trajectories of a whole run. Entry `k` belongs to measurement `y_{k+1}`:
/// `x_hat[k] = x̂_{k+1|k+1}` and `d_hat[k] = d̂_{k|k+1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SiseRunReport {
    pub x_hat: Vec<Vector>,
    pub d_hat: Vec<Vector>,
    /// `trace(P_t)`, saturated to `f64::MAX` once it stops being finite.
    pub p_trace: Vec<f64>,
    pub diverged: bool,
    pub divergence_onset: Option<usize>,
    pub warning: Option<String>,
}

/// Runs the recursion over `measurements` (`y_1, y_2, ..`). Numerical
/// breakdown after divergence ends the run early instead of failing it.
pub fn run_sise(sys: &StateSpaceModel, measurements: &[Vector], init: &SiseInit) -> Result<SiseRunReport> {
    let mut filter = sise_init(sys, init.x0_hat.clone(), init.p0.clone())?;
    let mut report = SiseRunReport {
        warning: filter.warning().map(str::to_owned),
        ..SiseRunReport::default()
    };
    for y in measurements {
        let step = match filter.step(y) {
            Ok(step) => step,
            Err(Error::DimensionMismatch(msg)) => return Err(Error::DimensionMismatch(msg)),
            Err(_) => {
                report.divergence_onset.get_or_insert(filter.state().t + 1);
                report.diverged = true;
                break;
            }
        };
        report.p_trace.push(if step.p_trace.is_finite() { step.p_trace } else { f64::MAX });
        report.x_hat.push(step.x_hat);
        report.d_hat.push(step.d_hat);
    }
    if let Some(onset) = filter.divergence_onset() {
        report.diverged = true;
        report.divergence_onset = Some(report.divergence_onset.map_or(onset, |o| o.min(onset)));
    }
    Ok(report)
}
