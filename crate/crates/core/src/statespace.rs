//! Linear time-invariant systems in state-space form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, complex_solve, eigenvalues, inverse, numerical_rank, observability_matrix,
    reachability_matrix, singular_values, solve, spectral_abscissa,
    spectral_radius, to_complex, CMat, Mat, Vector, GAP_GUARD, RANK_TOL,
};
use crate::matrixeq::symeig;
use crate::par::{map_slice, Execution};

/// Frequency responses are refused when `‖(zI − A)⁻¹‖` exceeds `1 / EVAL_TOL`.
pub const EVAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "discrete")]
    DiscreteZ,
    #[serde(rename = "continuous")]
    ContinuousS,
}

/// Realization `x' = A x + G d + w`, `y = C x + H d + v` with process noise
/// covariance `Q` and measurement noise covariance `R`.
///
/// `'` is the shift in discrete time and the derivative in continuous time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: Mat,
    g: Mat,
    c: Mat,
    h: Mat,
    domain: Domain,
    q_proc: Mat,
    r_meas: Mat,
}

pub(crate) fn check_psd(name: &str, m: &Mat, strict: bool) -> Result<()> {
    let scale = 1.0 + m.norm();
    if (m - m.transpose()).norm() > 1e-10 * scale {
        return Err(Error::InvalidInput(format!("{name} is not symmetric")));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let lo = symeig(m).values[0];
    if lo < -1e-10 * scale || (strict && lo <= 1e-14 * scale) {
        let kind = if strict { "positive definite" } else { "positive semidefinite" };
        return Err(Error::InvalidInput(format!("{name} is not {kind}")));
    }
    Ok(())
}

impl StateSpaceModel {
    /// Builds a model with zero process noise and unit measurement noise.
    pub fn new(a: Mat, g: Mat, c: Mat, h: Mat, domain: Domain) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!("A is {}x{}", n, a.ncols())));
        }
        if g.nrows() != n {
            return Err(Error::DimensionMismatch(format!("G has {} rows, expected {n}", g.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if h.shape() != (c.nrows(), g.ncols()) {
            return Err(Error::DimensionMismatch(format!(
                "H is {}x{}, expected {}x{}",
                h.nrows(),
                h.ncols(),
                c.nrows(),
                g.ncols()
            )));
        }
        let all = [&a, &g, &c, &h];
        if all.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        let p = c.nrows();
        Ok(Self {
            q_proc: Mat::zeros(n, n),
            r_meas: Mat::identity(p, p),
            a,
            g,
            c,
            h,
            domain,
        })
    }

    /// Replaces the noise covariances.
    pub fn with_noise(mut self, q_proc: Mat, r_meas: Mat) -> Result<Self> {
        if q_proc.shape() != (self.n(), self.n()) {
            return Err(Error::DimensionMismatch("Q must be n x n".into()));
        }
        if r_meas.shape() != (self.outputs(), self.outputs()) {
            return Err(Error::DimensionMismatch("R must be p x p".into()));
        }
        check_psd("Q", &q_proc, false)?;
        check_psd("R", &r_meas, true)?;
        self.q_proc = linalg::symmetrize(&q_proc);
        self.r_meas = linalg::symmetrize(&r_meas);
        Ok(self)
    }

    /// A static gain `H` with no states.
    pub fn static_gain(h: Mat, domain: Domain) -> Self {
        let (p, m) = h.shape();
        Self::new(Mat::zeros(0, 0), Mat::zeros(0, m), Mat::zeros(p, 0), h, domain)
            .expect("static gain dimensions are consistent")
    }

    /// SISO controllable canonical realization of `num / den`, coefficients
    /// listed from the highest power down.
    pub fn from_transfer_function(num: &[f64], den: &[f64], domain: Domain) -> Result<Self> {
        let den: Vec<f64> = den.iter().copied().skip_while(|&v| v == 0.0).collect();
        let num: Vec<f64> = num.iter().copied().skip_while(|&v| v == 0.0).collect();
        if den.is_empty() {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        if num.len() > den.len() {
            return Err(Error::InvalidInput("improper transfer function".into()));
        }
        let n = den.len() - 1;
        let lead = den[0];
        let a_coef: Vec<f64> = den.iter().map(|v| v / lead).collect();
        let mut b = vec![0.0; n + 1];
        for (k, v) in num.iter().enumerate() {
            b[n + 1 - num.len() + k] = v / lead;
        }
        let d = b[0];
        let mut a = Mat::zeros(n, n);
        let mut c = Mat::zeros(1, n);
        for j in 0..n {
            a[(0, j)] = -a_coef[j + 1];
            c[(0, j)] = b[j + 1] - d * a_coef[j + 1];
        }
        for i in 1..n {
            a[(i, i - 1)] = 1.0;
        }
        let mut g = Mat::zeros(n, 1);
        if n > 0 {
            g[(0, 0)] = 1.0;
        }
        Self::new(a, g, c, Mat::from_element(1, 1, d), domain)
    }

    /// SISO realization of `gain * prod(x - zeros) / prod(x - poles)`.
    /// Complex roots must come in conjugate pairs.
    pub fn from_zeros_poles(
        gain: f64,
        zeros: &[Complex64],
        poles: &[Complex64],
        domain: Domain,
    ) -> Result<Self> {
        let num: Vec<f64> = real_poly(zeros)?.iter().map(|v| v * gain).collect();
        Self::from_transfer_function(&num, &real_poly(poles)?, domain)
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn g(&self) -> &Mat {
        &self.g
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn h(&self) -> &Mat {
        &self.h
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn q_proc(&self) -> &Mat {
        &self.q_proc
    }
    pub fn r_meas(&self) -> &Mat {
        &self.r_meas
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension `m`.
    pub fn inputs(&self) -> usize {
        self.g.ncols()
    }
    /// Output dimension `p`.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_stable(&self) -> bool {
        match self.domain {
            Domain::DiscreteZ => spectral_radius(&self.a) < 1.0,
            Domain::ContinuousS => self.n() == 0 || spectral_abscissa(&self.a) < 0.0,
        }
    }

    pub(crate) fn require_domain(&self, domain: Domain) -> Result<()> {
        if self.domain == domain {
            Ok(())
        } else {
            Err(Error::WrongDomain {
                expected: match domain {
                    Domain::DiscreteZ => "discrete",
                    Domain::ContinuousS => "continuous",
                },
            })
        }
    }

    /// Transposed system `(Aᵀ, Cᵀ, Gᵀ, Hᵀ)`; noise covariances are reset.
    pub fn transpose(&self) -> Self {
        Self::new(
            self.a.transpose(),
            self.c.transpose(),
            self.g.transpose(),
            self.h.transpose(),
            self.domain,
        )
        .expect("transpose keeps dimensions consistent")
    }

    /// Series connection `second ∘ first`: `first` is driven by the input and
    /// its output drives `second`. States are stacked as `[first; second]`.
    pub fn series(first: &Self, second: &Self) -> Result<Self> {
        if first.domain != second.domain {
            return Err(Error::InvalidInput("series connection across domains".into()));
        }
        if first.outputs() != second.inputs() {
            return Err(Error::DimensionMismatch(format!(
                "series: {} outputs feed {} inputs",
                first.outputs(),
                second.inputs()
            )));
        }
        let (n1, n2) = (first.n(), second.n());
        let mut a = Mat::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&first.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&second.g * &first.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&second.a);
        let mut g = Mat::zeros(n1 + n2, first.inputs());
        g.view_mut((0, 0), (n1, first.inputs())).copy_from(&first.g);
        g.view_mut((n1, 0), (n2, first.inputs())).copy_from(&(&second.g * &first.h));
        let mut c = Mat::zeros(second.outputs(), n1 + n2);
        c.view_mut((0, 0), (second.outputs(), n1)).copy_from(&(&second.h * &first.c));
        c.view_mut((0, n1), (second.outputs(), n2)).copy_from(&second.c);
        Self::new(a, g, c, &second.h * &first.h, first.domain)
    }

    /// `H + C (zI − A)⁻¹ G`.
    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        let n = self.n();
        let h = to_complex(&self.h);
        if n == 0 {
            return Ok(h);
        }
        let mut zi_a = to_complex(&self.a).map(|v| -v);
        for i in 0..n {
            zi_a[(i, i)] += z;
        }
        let inv = complex_solve(&zi_a, &CMat::identity(n, n)).ok_or(Error::NearPole)?;
        if inv.norm() * EVAL_TOL > 1.0 {
            return Err(Error::NearPole);
        }
        Ok(h + to_complex(&self.c) * inv * to_complex(&self.g))
    }

    /// Evaluates the response at every point, in parallel when enabled.
    pub fn frequency_response(&self, points: &[Complex64]) -> Result<Vec<CMat>> {
        self.frequency_response_with(points, Execution::default())
    }

    pub fn frequency_response_with(
        &self,
        points: &[Complex64],
        exec: Execution,
    ) -> Result<Vec<CMat>> {
        map_slice(points, exec, |&z| self.eval(z)).into_iter().collect()
    }

    /// `[H, CG, CAG, ..]`, `count` terms.
    pub fn markov_parameters(&self, count: usize) -> Vec<Mat> {
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(self.h.clone());
        let mut ak_g = self.g.clone();
        for _ in 1..count {
            out.push(&self.c * &ak_g);
            ak_g = &self.a * ak_g;
        }
        out
    }

    /// Noise-free response to `inputs` from initial state `x0`; returns the
    /// states `x_0..x_{T-1}` and outputs `y_0..y_{T-1}`.
    pub fn simulate(&self, x0: &Vector, inputs: &[Vector]) -> (Vec<Vector>, Vec<Vector>) {
        let mut x = x0.clone();
        let mut states = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for d in inputs {
            outputs.push(&self.c * &x + &self.h * d);
            states.push(x.clone());
            x = &self.a * &x + &self.g * d;
        }
        (states, outputs)
    }

    /// Pole modulus margin check used before Tustin maps.
    fn has_eigenvalue_near(&self, target: f64) -> bool {
        let mut shifted = self.a.clone();
        for i in 0..self.n() {
            shifted[(i, i)] -= target;
        }
        let s = singular_values(&shifted);
        let scale = 1.0 + self.a.norm();
        s.last().is_some_and(|&lo| lo < 1e-10 * scale)
    }
}

fn real_poly(roots: &[Complex64]) -> Result<Vec<f64>> {
    let mut coef = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coef.len() + 1];
        for (k, c) in coef.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * r;
        }
        coef = next;
    }
    let scale = coef.iter().map(|c| c.norm()).fold(1.0, f64::max);
    if coef.iter().any(|c| c.im.abs() > 1e-12 * scale) {
        return Err(Error::InvalidInput("complex roots must come in conjugate pairs".into()));
    }
    Ok(coef.iter().map(|c| c.re).collect())
}

/// Evaluation points on the stability boundary of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<Complex64>,
    domain: Domain,
}

impl FrequencyGrid {
    /// `count` points `e^{jω}` with `ω` uniform on `[0, π]`.
    pub fn unit_circle(count: usize) -> Self {
        let denom = count.saturating_sub(1).max(1) as f64;
        let points = (0..count)
            .map(|k| Complex64::from_polar(1.0, std::f64::consts::PI * k as f64 / denom))
            .collect();
        Self { points, domain: Domain::DiscreteZ }
    }

    /// `count` points `e^{jω}` with `ω` uniform on `[0, 2π)`.
    pub fn full_unit_circle(count: usize) -> Self {
        let points = (0..count)
            .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / count as f64))
            .collect();
        Self { points, domain: Domain::DiscreteZ }
    }

    /// Default verification grid: `ω` on `[0, π]` clustered logarithmically
    /// towards `ω = 0`. For the continuous domain the same angles are mapped to
    /// `jω₀ tan(ω/2)` with `ω₀ = 1`, stopping just short of infinity.
    pub fn log_clustered(count: usize, domain: Domain) -> Self {
        let denom = count.saturating_sub(1).max(1) as f64;
        let angles = (0..count).map(|k| {
            let u = k as f64 / denom;
            std::f64::consts::PI * (1000f64.powf(u) - 1.0) / 999.0
        });
        let points = match domain {
            Domain::DiscreteZ => angles.map(|w| Complex64::from_polar(1.0, w)).collect(),
            Domain::ContinuousS => angles
                .map(|w| Complex64::new(0.0, (0.5 * w.min(std::f64::consts::PI * 0.999)).tan()))
                .collect(),
        };
        Self { points, domain }
    }

    /// `count` points `jω` with `ω = tan(θ/2)`, `θ` uniform on `[0, π)`.
    pub fn imaginary_axis(count: usize) -> Self {
        let points = (0..count)
            .map(|k| {
                let theta = std::f64::consts::PI * k as f64 / count.max(1) as f64;
                Complex64::new(0.0, (0.5 * theta).tan())
            })
            .collect();
        Self { points, domain: Domain::ContinuousS }
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }
    pub fn count(&self) -> usize {
        self.points.len()
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
}

/// Forward bilinear map `z = (ω₀ + s)/(ω₀ − s)` applied to a discrete model.
pub fn tustin_to_continuous(sys: &StateSpaceModel, omega0: f64) -> Result<StateSpaceModel> {
    sys.require_domain(Domain::DiscreteZ)?;
    if !(omega0 > 0.0) {
        return Err(Error::InvalidInput("omega0 must be positive".into()));
    }
    let n = sys.n();
    if n == 0 {
        return Ok(StateSpaceModel { domain: Domain::ContinuousS, ..sys.clone() });
    }
    if sys.has_eigenvalue_near(-1.0) {
        return Err(Error::PoleAtMinusOne);
    }
    let eye = Mat::identity(n, n);
    let i_plus_a = &eye + &sys.a;
    let inv = inverse(&i_plus_a).ok_or(Error::PoleAtMinusOne)?;
    let k = (2.0 * omega0).sqrt();
    let a = (&sys.a - &eye) * &inv * omega0;
    let g = &inv * &sys.g * k;
    let c = &sys.c * &inv * k;
    let h = &sys.h - &sys.c * &inv * &sys.g;
    Ok(StateSpaceModel {
        a,
        g,
        c,
        h,
        domain: Domain::ContinuousS,
        q_proc: sys.q_proc.clone(),
        r_meas: sys.r_meas.clone(),
    })
}

/// Inverse bilinear map `s = ω₀ (z − 1)/(z + 1)` applied to a continuous model.
pub fn tustin_to_discrete(sys: &StateSpaceModel, omega0: f64) -> Result<StateSpaceModel> {
    sys.require_domain(Domain::ContinuousS)?;
    if !(omega0 > 0.0) {
        return Err(Error::InvalidInput("omega0 must be positive".into()));
    }
    let n = sys.n();
    if n == 0 {
        return Ok(StateSpaceModel { domain: Domain::DiscreteZ, ..sys.clone() });
    }
    if sys.has_eigenvalue_near(omega0) {
        return Err(Error::PoleAtOmega0);
    }
    let eye = Mat::identity(n, n);
    let w_minus_a = &eye * omega0 - &sys.a;
    let inv = inverse(&w_minus_a).ok_or(Error::PoleAtOmega0)?;
    let k = (2.0 * omega0).sqrt();
    let a = &inv * (&eye * omega0 + &sys.a);
    let g = &inv * &sys.g * k;
    let c = &sys.c * &inv * k;
    let h = &sys.h + &sys.c * &inv * &sys.g;
    Ok(StateSpaceModel {
        a,
        g,
        c,
        h,
        domain: Domain::DiscreteZ,
        q_proc: sys.q_proc.clone(),
        r_meas: sys.r_meas.clone(),
    })
}

/// Finite-horizon observability Gramian and its numerical rank.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianReport {
    pub w_o: Mat,
    pub horizon: usize,
    pub rank: usize,
    pub min_eig: f64,
    pub invertible: bool,
}

/// `W_o(N) = Σ_{j<N} (Aᵀ)ʲ CᵀC Aʲ`.
pub fn observability_gramian_finite(a: &Mat, c: &Mat, horizon: usize) -> Result<GramianReport> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if a.nrows() != a.ncols() || c.ncols() != a.nrows() {
        return Err(Error::DimensionMismatch("observability gramian operands".into()));
    }
    let n = a.nrows();
    let mut w = Mat::zeros(n, n);
    let mut ca = c.clone();
    for _ in 0..horizon {
        w += ca.transpose() * &ca;
        ca *= a;
    }
    let w = linalg::symmetrize(&w);
    let eig = symeig(&w).values;
    let top = eig.last().copied().unwrap_or(0.0);
    let rank = if top <= 0.0 {
        0
    } else {
        eig.iter().filter(|&&v| v > RANK_TOL * top).count()
    };
    Ok(GramianReport {
        min_eig: eig.first().copied().unwrap_or(0.0),
        invertible: rank == n && horizon >= n,
        w_o: w,
        horizon,
        rank,
    })
}

/// Recovers the state at the start of a window from corrected outputs
/// `ý` (measurements with every input and noise contribution removed).
/// `outputs[k]` is the corrected output `k` steps after the start.
pub fn reconstruct_state(sys: &StateSpaceModel, outputs: &[Vector]) -> Result<Vector> {
    let n = sys.n();
    let report = observability_gramian_finite(&sys.a, &sys.c, outputs.len().max(1))?;
    if outputs.is_empty() || !report.invertible {
        return Err(Error::SingularGramian { rank: report.rank, n });
    }
    let mut rhs = Vector::zeros(n);
    let mut at_ct = sys.c.transpose();
    for y in outputs {
        if y.len() != sys.outputs() {
            return Err(Error::DimensionMismatch("corrected output length".into()));
        }
        rhs += &at_ct * y;
        at_ct = sys.a.transpose() * at_ct;
    }
    let x = solve(&report.w_o, &Mat::from_column_slice(n, 1, rhs.as_slice()))
        .ok_or(Error::SingularGramian { rank: report.rank, n })?;
    Ok(x.column(0).into_owned())
}

/// Ranks of the reachability and observability matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinimalityReport {
    pub n: usize,
    pub reachability_rank: usize,
    pub observability_rank: usize,
    pub minimal: bool,
}

pub fn reachability_observability_check(sys: &StateSpaceModel) -> MinimalityReport {
    let n = sys.n();
    let reach = numerical_rank(&reachability_matrix(&sys.a, &sys.g), RANK_TOL);
    let obs = numerical_rank(&observability_matrix(&sys.a, &sys.c), RANK_TOL);
    MinimalityReport {
        n,
        reachability_rank: reach,
        observability_rank: obs,
        minimal: reach == n && obs == n,
    }
}

/// McMillan degrees of `P` and `PP~` estimated from Hankel ranks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub macmillan_deg_p: usize,
    pub macmillan_deg_ppsim: usize,
    pub regular: bool,
    pub gap_p: f64,
    pub gap_ppsim: f64,
}

fn block_hankel(blocks: &[Mat], size: usize) -> Mat {
    let (p, m) = blocks[0].shape();
    let mut out = Mat::zeros(size * p, size * m);
    for i in 0..size {
        for j in 0..size {
            out.view_mut((i * p, j * m), (p, m)).copy_from(&blocks[i + j]);
        }
    }
    out
}

/// Rank of the block Hankel matrix with threshold `RANK_TOL · max(σ₁, reference)`.
fn hankel_rank(blocks: &[Mat], size: usize, reference: f64) -> Result<(usize, f64)> {
    let s = singular_values(&block_hankel(blocks, size));
    let top = s.first().copied().unwrap_or(0.0).max(reference);
    if top <= f64::MIN_POSITIVE {
        return Ok((0, f64::INFINITY));
    }
    let rank = s.iter().filter(|&&v| v > RANK_TOL * top).count();
    let kept = if rank == 0 { top } else { s[rank - 1] };
    let gap = match s.get(rank) {
        Some(&next) if next > 0.0 => kept / next,
        _ => f64::INFINITY,
    };
    if gap < GAP_GUARD {
        return Err(Error::RankAmbiguous { gap });
    }
    Ok((rank, gap))
}

/// Regularity test `δ(PP~) = 2δ(P)`.
///
/// `δ(P)` is the rank of the block Hankel matrix of the Markov parameters
/// `CA^{k-1}G`. `PP~` splits into a causal part and its mirrored anticausal
/// part, each of the same degree; the causal part has Markov parameters
/// `CA^{k-1}(AWCᵀ + GHᵀ)` with `W = AWAᵀ + GGᵀ`, so `δ(PP~)` is twice the
/// rank of their Hankel matrix. Continuous models are first mapped to
/// discrete time with `ω₀ = 1`.
pub fn regularity_check(sys: &StateSpaceModel) -> Result<RegularityReport> {
    if !sys.is_stable() {
        return Err(Error::UnstableA);
    }
    let disc = match sys.domain {
        Domain::DiscreteZ => sys.clone(),
        Domain::ContinuousS => tustin_to_discrete(sys, 1.0)?,
    };
    let n = disc.n();
    if n == 0 {
        return Ok(RegularityReport {
            macmillan_deg_p: 0,
            macmillan_deg_ppsim: 0,
            regular: true,
            gap_p: f64::INFINITY,
            gap_ppsim: f64::INFINITY,
        });
    }
    let size = 2 * n;
    let count = 2 * size;
    let markov: Vec<Mat> = disc.markov_parameters(count + 1).into_iter().skip(1).collect();
    let (deg_p, gap_p) = hankel_rank(&markov, size, 0.0)?;

    let w = crate::matrixeq::solve_lyapunov_discrete(&disc.a, &(&disc.g * disc.g.transpose()))?.x;
    let mid = &disc.a * &w * disc.c.transpose() + &disc.g * disc.h.transpose();
    let mut cov = Vec::with_capacity(count);
    let mut ca = disc.c.clone();
    for _ in 0..count {
        cov.push(&ca * &mid);
        ca *= &disc.a;
    }
    // Autocovariances never exceed the zero-lag term, which anchors the
    // threshold when the causal part vanishes (inner systems).
    let lag0 = (&disc.c * &w * disc.c.transpose() + &disc.h * disc.h.transpose()).norm();
    let (deg_causal, gap_ppsim) = hankel_rank(&cov, size, lag0)?;
    Ok(RegularityReport {
        macmillan_deg_p: deg_p,
        macmillan_deg_ppsim: 2 * deg_causal,
        regular: 2 * deg_causal == 2 * deg_p,
        gap_p,
        gap_ppsim,
    })
}

/// Finite transmission zeros of a square system with invertible feedthrough
/// (`eig(A − G H⁻¹ C)`) or with `H = 0` and invertible `CG` (eigenvalues of
/// the inverse-system map `(I − G(CG)⁻¹C)A` restricted to `ker C`).
pub fn transmission_zeros_square(sys: &StateSpaceModel) -> Result<Vec<Complex64>> {
    let (p, m) = (sys.outputs(), sys.inputs());
    if p != m {
        return Err(Error::NotSquareInvertible);
    }
    let hs = singular_values(&sys.h);
    let h_scale = 1.0 + sys.a.norm() + sys.g.norm() * sys.c.norm();
    let h_invertible = hs.last().is_some_and(|&s| s > RANK_TOL * hs[0] && s > 1e-12 * h_scale);
    if h_invertible {
        let x = solve(&sys.h, &sys.c).ok_or(Error::NotSquareInvertible)?;
        return Ok(eigenvalues(&(&sys.a - &sys.g * x)));
    }
    if sys.h.norm() > 1e-12 * h_scale {
        return Err(Error::NotSquareInvertible);
    }
    let cg = &sys.c * &sys.g;
    let cgs = singular_values(&cg);
    if cgs.is_empty() || cgs[cgs.len() - 1] <= RANK_TOL * cgs[0] {
        return Err(Error::NotSquareInvertible);
    }
    let n = sys.n();
    let pi = Mat::identity(n, n) - &sys.g * solve(&cg, &sys.c).ok_or(Error::NotSquareInvertible)?;
    let basis = linalg::null_space(&sys.c, RANK_TOL);
    Ok(eigenvalues(&(basis.transpose() * pi * &sys.a * &basis)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(a: f64, g: f64, cc: f64, h: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, g),
            Mat::from_element(1, 1, cc),
            Mat::from_element(1, 1, h),
            Domain::DiscreteZ,
        )
        .unwrap()
    }

    #[test]
    fn eval_first_order() {
        let v = scalar(0.5, 1.0, 1.0, 0.0).eval(c(1.0, 0.0)).unwrap();
        assert!((v[(0, 0)] - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn eval_at_pole_is_refused() {
        let e = scalar(0.5, 1.0, 1.0, 0.0).eval(c(0.5, 0.0));
        assert!(matches!(e, Err(Error::NearPole)));
    }

    #[test]
    fn canonical_form_matches_rational_function() {
        let sys = StateSpaceModel::from_transfer_function(&[2.0, 1.0], &[1.0, -0.5, 0.06], Domain::DiscreteZ)
            .unwrap();
        let z = c(0.3, 0.8);
        let expect = (z * 2.0 + 1.0) / (z * z - z * 0.5 + 0.06);
        assert!((sys.eval(z).unwrap()[(0, 0)] - expect).norm() < 1e-14);
    }

    #[test]
    fn biproper_canonical_form() {
        let sys =
            StateSpaceModel::from_zeros_poles(2.0, &[c(3.0, 0.0)], &[c(0.5, 0.0)], Domain::DiscreteZ).unwrap();
        assert!((sys.h()[(0, 0)] - 2.0).abs() < 1e-15);
        let z = c(-0.2, 0.4);
        let expect = (z - 3.0) * 2.0 / (z - 0.5);
        assert!((sys.eval(z).unwrap()[(0, 0)] - expect).norm() < 1e-14);
    }

    #[test]
    fn conjugate_pairs_required() {
        let e = StateSpaceModel::from_zeros_poles(1.0, &[], &[c(0.0, 0.5)], Domain::DiscreteZ);
        assert!(e.is_err());
    }

    #[test]
    fn tustin_scalar_by_hand() {
        let ct = tustin_to_continuous(&scalar(0.5, 1.0, 1.0, 0.0), 1.0).unwrap();
        let r2 = 2f64.sqrt() / 1.5;
        assert!((ct.a()[(0, 0)] + 1.0 / 3.0).abs() < 1e-15);
        assert!((ct.g()[(0, 0)] - r2).abs() < 1e-15);
        assert!((ct.c()[(0, 0)] - r2).abs() < 1e-15);
        assert!((ct.h()[(0, 0)] + 2.0 / 3.0).abs() < 1e-15);
        let back = tustin_to_discrete(&ct, 1.0).unwrap();
        assert!((back.a()[(0, 0)] - 0.5).abs() < 1e-14);
        assert!(back.h()[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn tustin_static_gain_passes_through() {
        let h = Mat::from_row_slice(2, 1, &[1.5, -2.0]);
        let s = StateSpaceModel::static_gain(h.clone(), Domain::DiscreteZ);
        let ct = tustin_to_continuous(&s, 1.0).unwrap();
        assert_eq!(ct.h(), &h);
        assert_eq!(ct.domain(), Domain::ContinuousS);
        assert_eq!(tustin_to_discrete(&ct, 1.0).unwrap().h(), &h);
    }

    #[test]
    fn tustin_rejects_pole_at_minus_one() {
        let e = tustin_to_continuous(&scalar(-1.0, 1.0, 1.0, 0.0), 1.0);
        assert!(matches!(e, Err(Error::PoleAtMinusOne)));
    }

    #[test]
    fn gramian_examples() {
        let a = Mat::from_element(1, 1, 0.5);
        let r = observability_gramian_finite(&a, &Mat::from_element(1, 1, 1.0), 2).unwrap();
        assert!((r.w_o[(0, 0)] - 1.25).abs() < 1e-15);
        assert_eq!(r.rank, 1);
        let r = observability_gramian_finite(&a, &Mat::zeros(1, 1), 3).unwrap();
        assert_eq!(r.rank, 0);
        assert!(!r.invertible);
    }

    #[test]
    fn reconstruct_scalar_window() {
        let sys = scalar(0.5, 1.0, 1.0, 0.0);
        let x = reconstruct_state(&sys, &[Vector::from_element(1, 4.0), Vector::from_element(1, 2.0)]).unwrap();
        assert!((x[0] - 4.0).abs() < 1e-14);
        let x = reconstruct_state(&sys, &[Vector::zeros(1), Vector::zeros(1)]).unwrap();
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn duplicated_mode_is_not_minimal() {
        let sys = StateSpaceModel::new(
            Mat::from_diagonal_element(2, 2, 0.5),
            Mat::from_element(2, 1, 1.0),
            Mat::from_element(1, 2, 1.0),
            Mat::zeros(1, 1),
            Domain::DiscreteZ,
        )
        .unwrap();
        let r = reachability_observability_check(&sys);
        assert!(!r.minimal);
        assert_eq!(r.reachability_rank, 1);
    }

    #[test]
    fn zeros_of_identity_feedthrough() {
        let a = Mat::from_row_slice(2, 2, &[0.2, 0.1, 0.0, -0.4]);
        let sys = StateSpaceModel::new(a, Mat::zeros(2, 2), Mat::identity(2, 2), Mat::identity(2, 2), Domain::DiscreteZ)
            .unwrap();
        let z = transmission_zeros_square(&sys).unwrap();
        assert!((z[0] - c(-0.4, 0.0)).norm() < 1e-14);
        assert!((z[1] - c(0.2, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn zeros_of_strictly_proper_plant() {
        let sys = StateSpaceModel::from_zeros_poles(
            1.0,
            &[c(2.0, 0.0)],
            &[c(0.3, 0.0), c(0.6, 0.0)],
            Domain::DiscreteZ,
        )
        .unwrap();
        let z = transmission_zeros_square(&sys).unwrap();
        assert_eq!(z.len(), 1);
        assert!((z[0] - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn non_square_zeros_refused() {
        let sys = StateSpaceModel::new(
            Mat::from_element(1, 1, 0.5),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(2, 1, 1.0),
            Mat::zeros(2, 1),
            Domain::DiscreteZ,
        )
        .unwrap();
        assert!(matches!(transmission_zeros_square(&sys), Err(Error::NotSquareInvertible)));
    }

    #[test]
    fn series_connection_multiplies_responses() {
        let a = scalar(0.5, 1.0, 1.0, 0.0);
        let b = scalar(-0.2, 1.0, 2.0, 1.0);
        let s = StateSpaceModel::series(&a, &b).unwrap();
        let z = c(0.1, 0.9);
        let lhs = s.eval(z).unwrap()[(0, 0)];
        let rhs = a.eval(z).unwrap()[(0, 0)] * b.eval(z).unwrap()[(0, 0)];
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn noise_covariances_validated() {
        let sys = scalar(0.5, 1.0, 1.0, 0.0);
        assert!(sys.clone().with_noise(Mat::from_element(1, 1, -1.0), Mat::identity(1, 1)).is_err());
        assert!(sys.clone().with_noise(Mat::zeros(1, 1), Mat::zeros(1, 1)).is_err());
        assert!(sys.with_noise(Mat::zeros(1, 1), Mat::identity(1, 1)).is_ok());
    }

    #[test]
    fn grids_lie_on_contour() {
        for z in FrequencyGrid::log_clustered(64, Domain::DiscreteZ).points() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        for s in FrequencyGrid::imaginary_axis(16).points() {
            assert_eq!(s.re, 0.0);
        }
        assert_eq!(FrequencyGrid::unit_circle(3).points()[2], Complex64::from_polar(1.0, std::f64::consts::PI));
    }
}
