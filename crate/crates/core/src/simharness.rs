//! Seeded Monte-Carlo experiments: simulate a plant and its factors under
//! common random numbers and run every estimator on the same measurements.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::highd::KalmanFilter;
use crate::innerouter::{factorize_discrete, FactorizationConfig, FactorizationResult};
use crate::inputstats::{ar_spectrum, estimate_stats, recover_d_stats, PsdConfig, SignalStats};
use crate::linalg::{eigenvalues, numerical_rank, singular_values, spectral_radius, CMat, Mat, Vector, RANK_TOL};
use crate::matrixeq::symeig;
use crate::par::{map_indexed, Execution};
use crate::sise::{run_sise, SiseInit, SiseRunReport};
use crate::statespace::{
    check_psd, reachability_observability_check, regularity_check, transmission_zeros_square, Domain, StateSpaceModel,
};

/// Unknown-input process.
#[derive(Debug, Clone, PartialEq)]
pub enum InputModel {
    /// Zero-mean white Gaussian noise.
    White { cov: Mat },
    /// `d_t = Σ_k A_k d_{t−k} + e_t`, zero initial history.
    Ar { coeffs: Vec<Mat>, innovation_cov: Mat },
    /// Given sequence; zero after it ends.
    Deterministic(Vec<Vector>),
}

impl InputModel {
    /// Scalar-coefficient AR(1) `d_t = a d_{t−1} + e_t` with unit innovations.
    pub fn ar1(m: usize, a: f64) -> Self {
        InputModel::Ar { coeffs: vec![Mat::identity(m, m) * a], innovation_cov: Mat::identity(m, m) }
    }

    pub fn zero(m: usize) -> Self {
        InputModel::White { cov: Mat::zeros(m, m) }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            InputModel::White { cov } => Some(cov.nrows()),
            InputModel::Ar { innovation_cov, .. } => Some(innovation_cov.nrows()),
            InputModel::Deterministic(seq) => seq.first().map(|v| v.len()),
        }
    }
}

/// Initial plant state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Standard normal draw times `scale`.
    Random { scale: f64 },
    Fixed(Vector),
}

/// Which estimators a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EstimatorSelection {
    pub sise_on_plant: bool,
    pub sise_on_outer: bool,
    pub highd: bool,
    pub stats: bool,
}

impl Default for EstimatorSelection {
    fn default() -> Self {
        Self { sise_on_plant: true, sise_on_outer: true, highd: true, stats: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub plant: StateSpaceModel,
    pub input: InputModel,
    pub horizon: usize,
    pub seed: u64,
    /// Overrides the plant's process noise covariance.
    pub q_proc: Option<Mat>,
    /// Overrides the plant's measurement noise covariance.
    pub r_meas: Option<Mat>,
    /// Samples discarded before statistics are estimated; `None` means `10 n`.
    pub burn_in: Option<usize>,
    pub trials: usize,
    pub initial_state: InitialState,
    /// Initial state of the outer-factor simulation (zero when `None`).
    pub outer_initial: Option<Vector>,
    /// Initial state of the inner-factor simulation (zero when `None`).
    pub inner_initial: Option<Vector>,
    /// Input covariance of the high-variance filter is `ε⁻¹ I`.
    pub epsilon: f64,
    /// Time at which estimation errors are collected across trials.
    pub checkpoint: usize,
    pub estimators: EstimatorSelection,
    pub factorization: FactorizationConfig,
    pub psd: PsdConfig,
    pub execution: Execution,
}

impl ScenarioConfig {
    /// Defaults: AR(1) input with coefficient 0.8, `x₀ ~ 5 N(0, I)`, zero
    /// initial factor states, `ε = 1e-8`, checkpoint at `t = 200`.
    pub fn new(plant: StateSpaceModel, horizon: usize, seed: u64) -> Self {
        let m = plant.inputs();
        Self {
            plant,
            input: InputModel::ar1(m, 0.8),
            horizon,
            seed,
            q_proc: None,
            r_meas: None,
            burn_in: None,
            trials: 1,
            initial_state: InitialState::Random { scale: 5.0 },
            outer_initial: None,
            inner_initial: None,
            epsilon: 1e-8,
            checkpoint: 200,
            estimators: EstimatorSelection::default(),
            factorization: FactorizationConfig::default(),
            psd: PsdConfig::default(),
            execution: Execution::default(),
        }
    }

    /// The plant with the configured noise covariances.
    pub fn effective_plant(&self) -> Result<StateSpaceModel> {
        let (q, r) = self.noise();
        self.plant.clone().with_noise(q, r)
    }

    /// Process and measurement noise covariances used by the simulation.
    pub fn noise(&self) -> (Mat, Mat) {
        let q = self.q_proc.clone().unwrap_or_else(|| self.plant.q_proc().clone());
        let r = self.r_meas.clone().unwrap_or_else(|| self.plant.r_meas().clone());
        (q, r)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(10 * self.plant.n())
    }

    fn validate(&self) -> Result<StateSpaceModel> {
        self.plant.require_domain(Domain::DiscreteZ)?;
        if self.horizon <= self.burn_in() {
            return Err(Error::InvalidInput("horizon must exceed the burn-in".into()));
        }
        if self.input.dim().is_some_and(|m| m != self.plant.inputs()) {
            return Err(Error::DimensionMismatch("input model dimension differs from the plant".into()));
        }
        if let InitialState::Fixed(x0) = &self.initial_state {
            if x0.len() != self.plant.n() {
                return Err(Error::DimensionMismatch("initial state".into()));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        let (q, r) = self.noise();
        if q.shape() != (self.plant.n(), self.plant.n()) || r.shape() != (self.plant.outputs(), self.plant.outputs()) {
            return Err(Error::DimensionMismatch("noise covariances".into()));
        }
        check_psd("Q", &q, false)?;
        check_psd("R", &r, false)?;
        let e = &self.estimators;
        if e.sise_on_plant || e.sise_on_outer || e.highd || e.stats {
            self.effective_plant()
        } else {
            // Simulation alone tolerates a singular measurement noise.
            Ok(self.plant.clone())
        }
    }
}

/// Random generator for one trial: ChaCha20 seeded with `seed`, stream `trial`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Square root `F` with `F Fᵀ = cov` from the symmetric eigendecomposition
/// (negative rounding-level eigenvalues are clipped to zero).
pub fn covariance_factor(cov: &Mat) -> Mat {
    let e = symeig(cov);
    let roots = Vector::from_iterator(e.values.len(), e.values.iter().map(|v| v.max(0.0).sqrt()));
    &e.vectors * Mat::from_diagonal(&roots)
}

fn gaussian(rng: &mut ChaCha20Rng, factor: &Mat) -> Vector {
    let z = Vector::from_iterator(factor.ncols(), (0..factor.ncols()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    factor * z
}

/// Plant signals, all of length `horizon`; `x[t]` is the state at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub x: Vec<Vector>,
    pub d: Vec<Vector>,
    pub w: Vec<Vector>,
    pub v: Vec<Vector>,
    pub y: Vec<Vector>,
}

/// Simulates `x_{t+1} = Ax_t + Gd_t + w_t`, `y_t = Cx_t + Hd_t + v_t`.
///
/// Draw order per trial: initial state, then for each step the input
/// innovation, `w_t` and `v_t`. Normals come from the ziggurat sampler of
/// `rand_distr`; correlated draws use [`covariance_factor`].
pub fn simulate_plant(cfg: &ScenarioConfig, trial: usize) -> Result<Trajectories> {
    let plant = cfg.validate()?;
    let (n, m, p) = (plant.n(), plant.inputs(), plant.outputs());
    let mut rng = trial_rng(cfg.seed, trial);
    let mut x = match &cfg.initial_state {
        InitialState::Random { scale } => {
            Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal))) * *scale
        }
        InitialState::Fixed(x0) => x0.clone(),
    };
    let (q, r) = cfg.noise();
    let wf = covariance_factor(&q);
    let vf = covariance_factor(&r);
    let input_factor = match &cfg.input {
        InputModel::White { cov } => covariance_factor(cov),
        InputModel::Ar { innovation_cov, .. } => covariance_factor(innovation_cov),
        InputModel::Deterministic(_) => Mat::zeros(m, 0),
    };
    let mut traj = Trajectories {
        x: Vec::with_capacity(cfg.horizon),
        d: Vec::with_capacity(cfg.horizon),
        w: Vec::with_capacity(cfg.horizon),
        v: Vec::with_capacity(cfg.horizon),
        y: Vec::with_capacity(cfg.horizon),
    };
    for t in 0..cfg.horizon {
        let d = match &cfg.input {
            InputModel::White { .. } => gaussian(&mut rng, &input_factor),
            InputModel::Ar { coeffs, .. } => {
                let mut d = gaussian(&mut rng, &input_factor);
                for (k, a) in coeffs.iter().enumerate() {
                    if t > k {
                        d += a * &traj.d[t - 1 - k];
                    }
                }
                d
            }
            InputModel::Deterministic(seq) => seq.get(t).cloned().unwrap_or_else(|| Vector::zeros(m)),
        };
        let w = gaussian(&mut rng, &wf);
        let v = gaussian(&mut rng, &vf);
        let y = plant.c() * &x + plant.h() * &d + &v;
        let next = plant.a() * &x + plant.g() * &d + &w;
        traj.x.push(std::mem::replace(&mut x, next));
        traj.d.push(d);
        traj.w.push(w);
        traj.v.push(v);
        traj.y.push(y);
        debug_assert_eq!(traj.y[t].len(), p);
    }
    Ok(traj)
}

/// Signals of the factored model driven by the plant run's `d`, `w`, `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredTrajectories {
    pub x_inner: Vec<Vector>,
    /// `f = Pᵢ d`.
    pub f: Vec<Vector>,
    pub x_outer: Vec<Vector>,
    pub y_outer: Vec<Vector>,
}

/// Runs `Pᵢ` on `d` and then `Pₒ` on `(f, w, v)`.
pub fn simulate_factored(
    cfg: &ScenarioConfig,
    fac: &FactorizationResult,
    traj: &Trajectories,
) -> Result<FactoredTrajectories> {
    let (inner, outer) = (&fac.inner, &fac.outer);
    if inner.inputs() != cfg.plant.inputs()
        || inner.outputs() != outer.inputs()
        || outer.n() != cfg.plant.n()
        || outer.outputs() != cfg.plant.outputs()
    {
        return Err(Error::DimensionMismatch("factors do not match the plant".into()));
    }
    let mut xi = cfg.inner_initial.clone().unwrap_or_else(|| Vector::zeros(inner.n()));
    let mut xo = cfg.outer_initial.clone().unwrap_or_else(|| Vector::zeros(outer.n()));
    if xi.len() != inner.n() || xo.len() != outer.n() {
        return Err(Error::DimensionMismatch("initial factor states".into()));
    }
    let len = traj.d.len();
    let mut out = FactoredTrajectories {
        x_inner: Vec::with_capacity(len),
        f: Vec::with_capacity(len),
        x_outer: Vec::with_capacity(len),
        y_outer: Vec::with_capacity(len),
    };
    for t in 0..len {
        let f = inner.c() * &xi + inner.h() * &traj.d[t];
        let y = outer.c() * &xo + outer.h() * &f + &traj.v[t];
        let next_i = inner.a() * &xi + inner.g() * &traj.d[t];
        let next_o = outer.a() * &xo + outer.g() * &f + &traj.w[t];
        out.x_inner.push(std::mem::replace(&mut xi, next_i));
        out.x_outer.push(std::mem::replace(&mut xo, next_o));
        out.f.push(f);
        out.y_outer.push(y);
    }
    Ok(out)
}

/// Fitted geometric rate `exp(slope)` of `log e_t` over the leading run of
/// values above `100 ε_mach · max e`.
pub fn fit_convergence_rate(curve: &[f64]) -> Result<f64> {
    if curve.len() < 20 {
        return Err(Error::TooFewSamples { got: curve.len(), needed: 20 });
    }
    let top = curve.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::CurveTooFlat);
    }
    let floor = 100.0 * f64::EPSILON * top;
    let window: Vec<(f64, f64)> = curve
        .iter()
        .take_while(|&&e| e > floor)
        .enumerate()
        .map(|(t, &e)| (t as f64, e.ln()))
        .collect();
    if window.len() < 2 {
        return Err(Error::CurveTooFlat);
    }
    let k = window.len() as f64;
    let mt = window.iter().map(|p| p.0).sum::<f64>() / k;
    let ml = window.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = window.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = window.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    Ok((sxy / sxx).exp())
}

/// Divergence outcome of a filter run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceSummary {
    pub diverged: bool,
    pub onset: Option<usize>,
    pub final_p_trace: Option<f64>,
}

impl DivergenceSummary {
    fn of(run: &SiseRunReport) -> Self {
        Self { diverged: run.diverged, onset: run.divergence_onset, final_p_trace: run.p_trace.last().copied() }
    }
}

/// High-variance filter versus outer-factor estimator over the last half of
/// the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceSummary {
    pub rms_difference: f64,
    pub rms_state: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial: usize,
    /// `‖x_t − xᵒ_t‖` for `t = 0..horizon`.
    pub gap_curve: Vec<f64>,
    /// Largest `‖y_t − yᵒ_t‖`.
    pub output_mismatch: f64,
    pub sise_plant: Option<DivergenceSummary>,
    pub sise_outer: Option<DivergenceSummary>,
    /// `x̂_{t|t} − x_t` of the outer-factor estimator at the checkpoint.
    pub error_at_checkpoint: Option<Vector>,
    /// `x̂_{t|t} − xᵒ_t` at the checkpoint.
    pub outer_error_at_checkpoint: Option<Vector>,
    pub equivalence: Option<EquivalenceSummary>,
    /// Stage failures that did not abort the trial.
    pub errors: Vec<String>,
}

/// Input statistics recovered from the outer-factor input estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRecovery {
    pub f_stats: SignalStats,
    pub recovered: SignalStats,
    /// Closed-form spectrum for autoregressive inputs.
    pub reference_psd: Option<Vec<CMat>>,
    /// Largest `‖Φ̂ − Φ‖_F / ‖Φ‖_F` over the grid interior.
    pub max_relative_error: Option<f64>,
}

/// Estimator outputs of the first trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Representative {
    pub plant: Trajectories,
    pub factored: FactoredTrajectories,
    pub sise_plant: Option<SiseRunReport>,
    pub sise_outer: Option<SiseRunReport>,
    pub highd_x_hat: Option<Vec<Vector>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub trials: usize,
    pub completed: usize,
    pub checkpoint: usize,
    pub mean_error: Option<Vector>,
    pub standard_error: Option<Vector>,
    /// Every component of the mean error lies within three standard errors.
    pub within_three_se: Option<bool>,
    pub mean_gap_curve: Vec<f64>,
    /// Fitted rate of the first trial's gap curve.
    pub fitted_rate: Option<f64>,
    /// Gap at the end of the first trial relative to its start.
    pub terminal_gap_ratio: Option<f64>,
    pub max_eig_a: f64,
    pub max_eig_inner: f64,
    /// `max(|eig A|, |eig Aᵢ|)`.
    pub rate_bound: f64,
    pub sise_plant_divergences: usize,
    pub sise_outer_divergences: usize,
    pub max_equivalence_ratio: Option<f64>,
    pub max_output_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub factorization: FactorizationResult,
    pub trials: Vec<TrialSummary>,
    pub representative: Option<Representative>,
    pub aggregate: Aggregate,
    pub stats: Option<StatsRecovery>,
}

fn sise_applicable(sys: &StateSpaceModel) -> bool {
    let scale = 1.0 + sys.g().norm() * sys.c().norm();
    sys.h().norm() <= 1e-12 * scale && numerical_rank(&(sys.c() * sys.g()), RANK_TOL) == sys.inputs()
}

struct TrialRun {
    summary: TrialSummary,
    representative: Option<Representative>,
}

fn run_trial(
    cfg: &ScenarioConfig,
    plant: &StateSpaceModel,
    fac: &FactorizationResult,
    trial: usize,
    keep: bool,
) -> Result<TrialRun> {
    let traj = simulate_plant(cfg, trial)?;
    let factored = simulate_factored(cfg, fac, &traj)?;
    let gap_curve: Vec<f64> = traj.x.iter().zip(&factored.x_outer).map(|(x, xo)| (x - xo).norm()).collect();
    let output_mismatch = traj
        .y
        .iter()
        .zip(&factored.y_outer)
        .map(|(y, yo)| (y - yo).norm())
        .fold(0.0, f64::max);
    let measurements = &traj.y[1..];
    let n = plant.n();
    let mut errors = Vec::new();

    let sise_plant = if cfg.estimators.sise_on_plant && sise_applicable(plant) {
        match run_sise(plant, measurements, &SiseInit::standard(n)) {
            Ok(r) => Some(r),
            Err(e) => {
                errors.push(format!("sise on plant: {e}"));
                None
            }
        }
    } else {
        None
    };
    let sise_outer = if cfg.estimators.sise_on_outer && sise_applicable(&fac.outer) {
        match run_sise(&fac.outer, measurements, &SiseInit::standard(n)) {
            Ok(r) => Some(r),
            Err(e) => {
                errors.push(format!("sise on outer factor: {e}"));
                None
            }
        }
    } else {
        None
    };
    let highd_x_hat = if cfg.estimators.highd {
        let d_cov = Mat::identity(plant.inputs(), plant.inputs()) / cfg.epsilon;
        match KalmanFilter::steady(plant, &d_cov, &Vector::zeros(n)) {
            Ok(mut kf) => measurements
                .iter()
                .map(|y| kf.step(y).map(|s| s.x_hat))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| errors.push(format!("high-variance filter: {e}")))
                .ok(),
            Err(e) => {
                errors.push(format!("high-variance filter: {e}"));
                None
            }
        }
    } else {
        None
    };

    let checkpoint = cfg.checkpoint;
    let (error_at_checkpoint, outer_error_at_checkpoint) = match &sise_outer {
        Some(r) if checkpoint >= 1 && checkpoint <= r.x_hat.len() => {
            let est = &r.x_hat[checkpoint - 1];
            (Some(est - &traj.x[checkpoint]), Some(est - &factored.x_outer[checkpoint]))
        }
        _ => (None, None),
    };
    let equivalence = match (&sise_outer, &highd_x_hat) {
        (Some(r), Some(kf)) if r.x_hat.len() >= 2 && !r.diverged => {
            let start = r.x_hat.len() / 2;
            let count = (r.x_hat.len() - start) as f64;
            let diff: f64 = (start..r.x_hat.len()).map(|k| (&r.x_hat[k] - &kf[k]).norm_squared()).sum();
            let state: f64 = (start..r.x_hat.len()).map(|k| traj.x[k + 1].norm_squared()).sum();
            let (rms_difference, rms_state) = ((diff / count).sqrt(), (state / count).sqrt());
            Some(EquivalenceSummary { rms_difference, rms_state, ratio: rms_difference / rms_state })
        }
        _ => None,
    };
    let summary = TrialSummary {
        trial,
        gap_curve,
        output_mismatch,
        sise_plant: sise_plant.as_ref().map(DivergenceSummary::of),
        sise_outer: sise_outer.as_ref().map(DivergenceSummary::of),
        error_at_checkpoint,
        outer_error_at_checkpoint,
        equivalence,
        errors,
    };
    let representative = keep.then_some(Representative { plant: traj, factored, sise_plant, sise_outer, highd_x_hat });
    Ok(TrialRun { summary, representative })
}

fn stats_recovery(cfg: &ScenarioConfig, fac: &FactorizationResult, rep: &Representative) -> Result<StatsRecovery> {
    let run = rep
        .sise_outer
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("statistics need the outer-factor estimator".into()))?;
    let psd_cfg = PsdConfig { burn_in: cfg.burn_in(), ..cfg.psd };
    let f_stats = estimate_stats(&run.d_hat, &psd_cfg)?;
    let recovered = recover_d_stats(&f_stats, &fac.inner)?;
    let reference_psd = match &cfg.input {
        InputModel::Ar { coeffs, innovation_cov } => Some(ar_spectrum(coeffs, innovation_cov, &recovered.frequencies)?),
        InputModel::White { cov } => Some(vec![crate::linalg::to_complex(cov); recovered.frequencies.len()]),
        InputModel::Deterministic(_) => None,
    };
    let max_relative_error = reference_psd.as_ref().map(|reference| {
        let last = reference.len() - 1;
        (1..last)
            .map(|k| (&recovered.psd[k] - &reference[k]).norm() / reference[k].norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    });
    Ok(StatsRecovery { f_stats, recovered, reference_psd, max_relative_error })
}

/// Factorizes the plant once, then runs every trial and aggregates in trial
/// order. Trial failures are recorded in the trial summaries.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    let plant = cfg.validate()?;
    let fac = factorize_discrete(&plant, &cfg.factorization)?;
    let runs = map_indexed(cfg.trials, cfg.execution, |i| run_trial(cfg, &plant, &fac, i, i == 0));
    let mut trials = Vec::with_capacity(cfg.trials);
    let mut representative = None;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                if run.representative.is_some() {
                    representative = run.representative;
                }
                trials.push(run.summary);
            }
            Err(e) => trials.push(TrialSummary {
                trial: i,
                gap_curve: Vec::new(),
                output_mismatch: f64::NAN,
                sise_plant: None,
                sise_outer: None,
                error_at_checkpoint: None,
                outer_error_at_checkpoint: None,
                equivalence: None,
                errors: vec![e.to_string()],
            }),
        }
    }
    let stats = match (&representative, cfg.estimators.stats) {
        (Some(rep), true) => Some(stats_recovery(cfg, &fac, rep)?),
        _ => None,
    };
    let aggregate = aggregate(cfg, &plant, &fac, &trials);
    Ok(ExperimentReport { factorization: fac, trials, representative, aggregate, stats })
}

fn aggregate(cfg: &ScenarioConfig, plant: &StateSpaceModel, fac: &FactorizationResult, trials: &[TrialSummary]) -> Aggregate {
    let errors: Vec<&Vector> = trials.iter().filter_map(|t| t.error_at_checkpoint.as_ref()).collect();
    let (mean_error, standard_error, within_three_se) = if errors.len() >= 2 {
        let k = errors.len() as f64;
        let n = errors[0].len();
        let mean = errors.iter().fold(Vector::zeros(n), |acc, e| acc + *e) / k;
        let var = errors.iter().fold(Vector::zeros(n), |acc, e| acc + (*e - &mean).map(|v| v * v)) / (k - 1.0);
        let se = var.map(|v| (v / k).sqrt());
        let ok = mean.iter().zip(se.iter()).all(|(m, s)| m.abs() <= 3.0 * s);
        (Some(mean), Some(se), Some(ok))
    } else {
        (None, None, None)
    };
    let curves: Vec<&Vec<f64>> = trials.iter().map(|t| &t.gap_curve).filter(|c| !c.is_empty()).collect();
    let mean_gap_curve = if curves.is_empty() {
        Vec::new()
    } else {
        (0..curves[0].len()).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / curves.len() as f64).collect()
    };
    let first = curves.first();
    let fitted_rate = first.and_then(|c| fit_convergence_rate(c).ok());
    let terminal_gap_ratio = first.and_then(|c| match (c.first(), c.last()) {
        (Some(&a), Some(&b)) if a > 0.0 => Some(b / a),
        _ => None,
    });
    let max_eig_a = spectral_radius(plant.a());
    let max_eig_inner = spectral_radius(fac.inner.a());
    Aggregate {
        trials: cfg.trials,
        completed: trials.iter().filter(|t| !t.gap_curve.is_empty()).count(),
        checkpoint: cfg.checkpoint,
        mean_error,
        standard_error,
        within_three_se,
        mean_gap_curve,
        fitted_rate,
        terminal_gap_ratio,
        max_eig_a,
        max_eig_inner,
        rate_bound: max_eig_a.max(max_eig_inner),
        sise_plant_divergences: trials.iter().filter(|t| t.sise_plant.is_some_and(|s| s.diverged)).count(),
        sise_outer_divergences: trials.iter().filter(|t| t.sise_outer.is_some_and(|s| s.diverged)).count(),
        max_equivalence_ratio: trials
            .iter()
            .filter_map(|t| t.equivalence.map(|e| e.ratio))
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r)))),
        max_output_mismatch: trials.iter().map(|t| t.output_mismatch).filter(|v| v.is_finite()).fold(0.0, f64::max),
    }
}

/// Shape of a randomly generated plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomPlantSpec {
    pub max_states: usize,
    pub outputs: usize,
    pub inputs: usize,
    pub unstable_zeros: usize,
    /// `H = 0` with `rank(CG) = m` when set, otherwise a full-rank `H`.
    pub strictly_proper: bool,
}

fn random_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// First-order factor `I + u(a − z_u)(z − a)⁻¹uᵀ` with a zero at `z_u` in
/// direction `u` and a pole at `a`.
fn zero_factor(u: &Vector, a: f64, zero: f64) -> StateSpaceModel {
    let m = u.len();
    StateSpaceModel::new(
        Mat::from_element(1, 1, a),
        Mat::from_row_slice(1, m, u.as_slice()),
        Mat::from_column_slice(m, 1, u.as_slice()) * (a - zero),
        Mat::identity(m, m),
        Domain::DiscreteZ,
    )
    .expect("zero factor dimensions")
}

/// Draws a stable, minimal, regular plant with exactly
/// `spec.unstable_zeros` real zeros outside the unit circle (modulus in
/// `[1.3, 3]`) and all other zeros and poles inside radius 0.9.
///
/// The plant is `P_s Z_1 .. Z_k`: a random stable plant without unstable
/// zeros followed by first-order zero factors. Candidates failing any check
/// are redrawn.
pub fn random_regular_plant(rng: &mut ChaCha20Rng, spec: &RandomPlantSpec) -> Result<StateSpaceModel> {
    let (p, m, k) = (spec.outputs, spec.inputs, spec.unstable_zeros);
    if p < m || m == 0 || spec.max_states < m + k {
        return Err(Error::InvalidInput("need p >= m >= 1 and room for the zero factors".into()));
    }
    for _ in 0..10_000 {
        let ns = rng.random_range(m..=spec.max_states - k);
        let raw = random_matrix(rng, ns, ns);
        let rho = spectral_radius(&raw);
        if rho < 1e-6 {
            continue;
        }
        let a_s = raw * (rng.random_range(0.3..0.85) / rho);
        let b_s = random_matrix(rng, ns, m);
        let c_s = random_matrix(rng, p, ns);
        let d_s = if spec.strictly_proper { Mat::zeros(p, m) } else { random_matrix(rng, p, m) };
        let Ok(ps) = StateSpaceModel::new(a_s, b_s, c_s, d_s, Domain::DiscreteZ) else { continue };
        if p == m {
            match transmission_zeros_square(&ps) {
                Ok(z) if z.iter().all(|z| z.norm() < 0.9) => {}
                _ => continue,
            }
        }
        let mut plant = ps;
        let mut zeros = Vec::with_capacity(k);
        for _ in 0..k {
            let u = random_matrix(rng, m, 1).column(0).into_owned();
            let u = &u / u.norm();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let zero = sign * rng.random_range(1.3..3.0);
            let pole = rng.random_range(-0.6..0.6);
            zeros.push(zero);
            plant = StateSpaceModel::series(&zero_factor(&u, pole, zero), &plant)?;
        }
        if !accept_candidate(&plant, &zeros, spec) {
            continue;
        }
        return Ok(plant);
    }
    Err(Error::IterationDiverged("no admissible random plant found".into()))
}

fn accept_candidate(plant: &StateSpaceModel, zeros: &[f64], spec: &RandomPlantSpec) -> bool {
    if spectral_radius(plant.a()) > 0.9 || !reachability_observability_check(plant).minimal {
        return false;
    }
    if zeros.windows(2).any(|w| (w[0] - w[1]).abs() < 0.2) {
        return false;
    }
    let poles = eigenvalues(plant.a());
    if zeros.iter().any(|z| poles.iter().any(|p| (p - Complex64::new(1.0 / z, 0.0)).norm() < 0.1)) {
        return false;
    }
    if spec.strictly_proper {
        let s = singular_values(plant.a());
        if s.last().is_none_or(|&lo| lo < 1e-2) {
            return false;
        }
        let cg = singular_values(&(plant.c() * plant.g()));
        if cg[spec.inputs - 1] < 1e-2 * cg[0] {
            return false;
        }
    }
    if spec.outputs == spec.inputs {
        let Ok(z) = transmission_zeros_square(plant) else { return false };
        let outside = z.iter().filter(|z| z.norm() > 1.0).count();
        if outside != zeros.len() || z.iter().any(|z| (z.norm() - 1.0).abs() < 0.1) {
            return false;
        }
    }
    matches!(regularity_check(plant), Ok(r) if r.regular && r.macmillan_deg_p == plant.n())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_curve_rate() {
        let curve: Vec<f64> = (0..100).map(|t| 0.9f64.powi(t)).collect();
        assert!((fit_convergence_rate(&curve).unwrap() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_curve_is_flat() {
        assert!(matches!(fit_convergence_rate(&[0.0; 30]), Err(Error::CurveTooFlat)));
        assert!(matches!(fit_convergence_rate(&[1.0; 5]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn covariance_factor_reproduces_covariance() {
        let cov = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = covariance_factor(&cov);
        assert!((&f * f.transpose() - cov).norm() < 1e-14);
        let singular = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = covariance_factor(&singular);
        assert!((&f * f.transpose() - singular).norm() < 1e-14);
    }

    #[test]
    fn trial_streams_are_independent_and_reproducible() {
        let a: f64 = trial_rng(7, 0).random();
        let b: f64 = trial_rng(7, 1).random();
        let c: f64 = trial_rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
