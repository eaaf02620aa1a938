//! Inner–outer factorization `P = Pₒ Pᵢ` of stable regular plants.
//!
//! The construction works in continuous time on the transposed plant with
//! the control-ordering algorithm (`G = Gᵢ Gₒ`), then transposes back so that
//! the outer factor shares `A` and `C` with the plant. Discrete plants are
//! carried through a bilinear map.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result, Stage};
use crate::linalg::{
    complex_singular_values, eigenvalues, inverse, numerical_rank, polar_factor, singular_values,
    solve, symmetrize, CMat, Mat, RANK_TOL,
};
use crate::matrixeq::{solve_lyapunov_continuous, spectral_factor_continuous, symeig, Orientation};
use crate::par::{map_slice, Execution};
use crate::statespace::{
    reachability_observability_check, regularity_check, transmission_zeros_square,
    tustin_to_continuous, tustin_to_discrete, Domain, FrequencyGrid, StateSpaceModel,
};

/// Tolerances and grid sizes for factorization and its verification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorizationConfig {
    /// Bilinear-map frequency.
    pub omega0: f64,
    /// Relative eigenvalue threshold for the rank of `Q − X`.
    pub rank_tol: f64,
    /// Required ratio between the smallest kept and largest dropped eigenvalue.
    pub gap_guard: f64,
    /// Points in the verification grid.
    pub grid_points: usize,
    pub inner_tol: f64,
    /// Product residual bound is `product_tol · (1 + max ‖P‖)`.
    pub product_tol: f64,
    /// Minimum singular value the outer factor must keep on and outside the
    /// stability boundary.
    pub outer_threshold: f64,
    /// Relative tolerance for the algebraic identities of the construction.
    pub identity_tol: f64,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        Self {
            omega0: 1.0,
            rank_tol: 1e-8,
            gap_guard: 10.0,
            grid_points: 256,
            inner_tol: 1e-7,
            product_tol: 1e-6,
            outer_threshold: 1e-6,
            identity_tol: 1e-8,
        }
    }
}

/// Intermediate quantities of the control-ordering construction
/// `G = Gᵢ Gₒ`, with `G = (A, B, C, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenStage {
    /// Observability Gramian of `G`: `QA + AᵀQ + CᵀC = 0`.
    pub q: Mat,
    /// Observability Gramian of `Gₒ`: `XA + AᵀX + HᵀH = 0`.
    pub x: Mat,
    /// Eigenvalues of `Q − X`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Ratio between the smallest kept and the largest dropped eigenvalue.
    pub gap: f64,
    /// Orthogonal `V` with `V(Q − X)Vᵀ = diag(0, Σ)`.
    pub v: Mat,
    pub ell: usize,
    /// The nonzero `ℓ × ℓ` block of `V(Q − X)Vᵀ`.
    pub sigma_block: Mat,
    /// Output map of the outer factor `Gₒ = J + H(sI − A)⁻¹B`.
    pub h: Mat,
    /// Feedthrough of the outer factor.
    pub j: Mat,
    /// Orthonormal-column feedthrough of the inner factor.
    pub u: Mat,
    pub a_hat: Mat,
    pub b_hat: Mat,
    pub c_hat: Mat,
}

/// Control-ordering factors `G = Gᵢ Gₒ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlFactorization {
    pub inner: StateSpaceModel,
    pub outer: StateSpaceModel,
    pub stage: GreenStage,
}

/// How a discrete plant was brought into a form with full-rank feedthrough.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Route {
    /// The feedthrough already has full column rank.
    Direct,
    /// `H = 0` and `rank(CG) = m`: the one-step advanced plant
    /// `zP(z) = CG + CA(zI − A)⁻¹G` is factored and the delay returned to the
    /// outer factor.
    Advanced,
}

/// Pass/fail record for the factorization invariants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub grid_points: usize,
    /// `max ‖Pᵢ Pᵢ~ − I‖_F` over the grid.
    pub inner_residual: f64,
    /// `max ‖P − Pₒ Pᵢ‖_F` over the grid.
    pub product_residual: f64,
    pub product_bound: f64,
    /// Smallest singular value of `Pₒ` on and outside the stability boundary.
    pub outer_min_singular_value: f64,
    /// Number of unstable zeros found by an independent eigenvalue
    /// computation, when the plant shape allows it.
    pub unstable_zero_count: Option<usize>,
    pub ell: usize,
    pub inner_poles: Vec<(f64, f64)>,
    pub inner_poles_stable: bool,
    pub inner_passed: bool,
    pub product_passed: bool,
    pub outer_passed: bool,
    pub ell_passed: bool,
    pub passed: bool,
}

/// Estimation-ordering factorization `P = Pₒ Pᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationResult {
    /// The plant as given.
    pub plant: StateSpaceModel,
    /// `Hₒ + C(zI − A)⁻¹Gₒ`, same `A` and `C` as the plant.
    pub outer: StateSpaceModel,
    /// `Uᵀ + B̂ᵀ(zI − Âᵀ)⁻¹Ĉᵀ` (in the plant's domain).
    pub inner: StateSpaceModel,
    pub ell: usize,
    pub route: Route,
    /// Continuous plant handed to the construction (equal to `plant` for
    /// continuous input).
    pub continuous_plant: StateSpaceModel,
    pub continuous_outer: StateSpaceModel,
    pub continuous_inner: StateSpaceModel,
    /// Construction applied to the transposed continuous plant.
    pub stage: GreenStage,
    pub verification: VerificationReport,
}

impl FactorizationResult {
    pub fn v(&self) -> &Mat {
        &self.stage.v
    }
    pub fn sigma_block(&self) -> &Mat {
        &self.stage.sigma_block
    }
    pub fn u(&self) -> &Mat {
        &self.stage.u
    }
}

fn relative_residual(lhs: &Mat, rhs: &Mat) -> f64 {
    (lhs - rhs).norm() / (1.0 + rhs.norm().max(lhs.norm()))
}

fn check_identity(name: &'static str, lhs: &Mat, rhs: &Mat, tol: f64) -> Result<f64> {
    let residual = relative_residual(lhs, rhs);
    if residual > tol {
        return Err(Error::IdentityViolation { name, residual });
    }
    Ok(residual)
}

/// Common preconditions: continuous, stable, minimal.
fn require_factorizable(sys: &StateSpaceModel) -> Result<()> {
    if !sys.is_stable() {
        return Err(Error::UnstableA);
    }
    let minimal = reachability_observability_check(sys);
    if !minimal.minimal {
        return Err(Error::NotMinimal {
            reach: minimal.reachability_rank,
            obs: minimal.observability_rank,
            n: minimal.n,
        });
    }
    Ok(())
}

fn require_regular(regularity_subject: &StateSpaceModel) -> Result<()> {
    let reg = regularity_check(regularity_subject)?;
    if !reg.regular {
        return Err(Error::NotRegular {
            delta_p: reg.macmillan_deg_p,
            delta_ppsim: reg.macmillan_deg_ppsim,
        });
    }
    Ok(())
}

/// Control-ordering factorization `G = Gᵢ Gₒ` of a stable, minimal,
/// regular continuous system with `Gᵢ~Gᵢ = I` and `Gₒ` outer.
pub fn green_factorize_control(g: &StateSpaceModel, cfg: &FactorizationConfig) -> Result<ControlFactorization> {
    g.require_domain(Domain::ContinuousS)?;
    require_factorizable(g)?;
    require_regular(&g.transpose())?;
    green_steps(g, cfg)
}

fn green_steps(g: &StateSpaceModel, cfg: &FactorizationConfig) -> Result<ControlFactorization> {
    let (a, c, d) = (g.a(), g.c(), g.h());
    let n = g.n();
    let q = solve_lyapunov_continuous(&a.transpose(), &(c.transpose() * c))?.x;
    let outer = spectral_factor_continuous(g, Orientation::Control)?;
    let (h, j) = (outer.c().clone(), outer.h().clone());
    let x = solve_lyapunov_continuous(&a.transpose(), &(h.transpose() * &h))?.x;

    let diff = symmetrize(&(&q - &x));
    let eig = symeig(&diff);
    let scale = eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let threshold = cfg.rank_tol * scale;
    if eig.values.first().is_some_and(|&lo| lo < -1e3 * threshold) {
        return Err(Error::IdentityViolation {
            name: "Q - X is positive semidefinite",
            residual: -eig.values[0] / scale,
        });
    }
    let ell = eig.values.iter().filter(|&&v| v > threshold).count();
    let k = n - ell;
    let gap = if ell == 0 || ell == n {
        f64::INFINITY
    } else {
        eig.values[k] / eig.values[k - 1].abs().max(f64::MIN_POSITIVE)
    };
    if gap < cfg.gap_guard {
        return Err(Error::RankDecisionAmbiguous { gap });
    }
    let v = eig.transform();
    let rotated = &v * &diff * v.transpose();
    let sigma_block = symmetrize(&rotated.view((k, k), (ell, ell)).into_owned());

    let ab = &v * a * v.transpose();
    let cv = c * v.transpose();
    let hv = &h * v.transpose();
    let a22 = ab.view((k, k), (ell, ell)).into_owned();
    let c1 = cv.columns(0, k).into_owned();
    let c2 = cv.columns(k, ell).into_owned();
    let h1 = hv.columns(0, k).into_owned();
    let h2 = hv.columns(k, ell).into_owned();

    let left = stack_columns(&c1, d);
    let right = stack_columns(&h1, &j);
    let u = polar_factor(&(&left * right.transpose()));
    check_identity("U [H1 J] = [C1 D]", &(&u * &right), &left, cfg.identity_tol)?;

    let c_hat = &u * &h2 - &c2;
    let b_hat = if ell == 0 {
        Mat::zeros(0, j.nrows())
    } else {
        solve(&sigma_block, &(c2.transpose() * &u - h2.transpose()))
            .ok_or(Error::RankDecisionAmbiguous { gap })?
    };
    let a_hat = &a22 + &b_hat * &h2;
    let inner = StateSpaceModel::new(a_hat.clone(), b_hat.clone(), c_hat.clone(), u.clone(), Domain::ContinuousS)?;
    Ok(ControlFactorization {
        inner,
        outer,
        stage: GreenStage {
            q,
            x,
            eigenvalues: eig.values,
            gap,
            v,
            ell,
            sigma_block,
            h,
            j,
            u,
            a_hat,
            b_hat,
            c_hat,
        },
    })
}

fn stack_columns(left: &Mat, right: &Mat) -> Mat {
    let mut out = Mat::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}

/// Estimation-ordering factorization `P = Pₒ Pᵢ` of a continuous plant,
/// obtained by factoring `Pᵀ` in control ordering and transposing back.
pub fn green_factorize_estimation(p: &StateSpaceModel, cfg: &FactorizationConfig) -> Result<FactorizationResult> {
    p.require_domain(Domain::ContinuousS)?;
    require_factorizable(p)?;
    require_regular(p)?;
    let ctl = green_steps(&p.transpose(), cfg)?;
    let outer = ctl.outer.transpose();
    let inner = ctl.inner.transpose();
    let outer = outer.with_noise(p.q_proc().clone(), p.r_meas().clone())?;
    let grid = FrequencyGrid::log_clustered(cfg.grid_points, Domain::ContinuousS);
    let verification = verify_factorization(p, &outer, &inner, ctl.stage.ell, grid.points(), cfg)?;
    Ok(FactorizationResult {
        plant: p.clone(),
        ell: ctl.stage.ell,
        route: Route::Direct,
        continuous_plant: p.clone(),
        continuous_outer: outer.clone(),
        continuous_inner: inner.clone(),
        outer,
        inner,
        stage: ctl.stage,
        verification,
    })
}

/// Inner–outer factorization of a stable, minimal, regular discrete plant.
///
/// Plants with full-column-rank feedthrough are mapped to continuous time,
/// factored, and mapped back. Strictly proper plants with `rank(CG) = m`
/// have every zero at infinity in common with a pure delay; the advanced plant
/// `zP(z)` is factored instead and the outer factor keeps `H = 0`. In both
/// cases the outer factor uses the plant's own `A` and `C`.
pub fn factorize_discrete(p: &StateSpaceModel, cfg: &FactorizationConfig) -> Result<FactorizationResult> {
    let pre = |e: Error| e.at(Stage::Preconditions);
    p.require_domain(Domain::DiscreteZ).map_err(pre)?;
    require_factorizable(p).map_err(pre)?;
    require_regular(p).map_err(pre)?;

    let m = p.inputs();
    let route = if numerical_rank(p.h(), RANK_TOL) == m {
        Route::Direct
    } else {
        let scale = 1.0 + p.g().norm() * p.c().norm();
        if p.h().norm() > 1e-12 * scale {
            return Err(pre(Error::SingularFeedthrough));
        }
        let cg = p.c() * p.g();
        let rank = numerical_rank(&cg, RANK_TOL);
        if rank < m {
            return Err(pre(Error::RankCGDeficient { rank, m }));
        }
        let s = singular_values(p.a());
        if s.last().is_none_or(|&lo| lo <= 1e-10 * (1.0 + s[0])) {
            return Err(pre(Error::InvalidInput(
                "strictly proper plant needs an invertible state matrix".into(),
            )));
        }
        Route::Advanced
    };
    let working = match route {
        Route::Direct => p.clone(),
        Route::Advanced => StateSpaceModel::new(
            p.a().clone(),
            p.g().clone(),
            p.c() * p.a(),
            p.c() * p.g(),
            Domain::DiscreteZ,
        )
        .map_err(pre)?,
    };

    let cont = tustin_to_continuous(&working, cfg.omega0).map_err(|e| e.at(Stage::ToContinuous))?;
    let ctl = green_steps(&cont.transpose(), cfg).map_err(|e| e.at(Stage::Factorization))?;
    let cont_outer = ctl.outer.transpose();
    let cont_inner = ctl.inner.transpose();
    let to_disc = |s: &StateSpaceModel| tustin_to_discrete(s, cfg.omega0).map_err(|e| e.at(Stage::ToDiscrete));
    let outer_image = to_disc(&cont_outer)?;
    let inner = to_disc(&cont_inner)?;

    let tol = cfg.identity_tol;
    let ver = |e: Error| e.at(Stage::Verification);
    check_identity("outer factor keeps A", outer_image.a(), working.a(), tol).map_err(ver)?;
    check_identity("outer factor keeps C", outer_image.c(), working.c(), tol).map_err(ver)?;
    let (g_o, h_o) = match route {
        Route::Direct => (outer_image.g().clone(), outer_image.h().clone()),
        Route::Advanced => {
            check_identity(
                "advanced outer feedthrough equals C Go",
                outer_image.h(),
                &(p.c() * outer_image.g()),
                tol,
            )
            .map_err(ver)?;
            (outer_image.g().clone(), Mat::zeros(p.outputs(), m))
        }
    };
    let outer = StateSpaceModel::new(p.a().clone(), g_o, p.c().clone(), h_o, Domain::DiscreteZ)
        .and_then(|o| o.with_noise(p.q_proc().clone(), p.r_meas().clone()))
        .map_err(ver)?;

    let grid = FrequencyGrid::log_clustered(cfg.grid_points, Domain::DiscreteZ);
    let verification = verify_factorization(p, &outer, &inner, ctl.stage.ell, grid.points(), cfg).map_err(ver)?;
    Ok(FactorizationResult {
        plant: p.clone(),
        ell: ctl.stage.ell,
        route,
        continuous_plant: cont,
        continuous_outer: cont_outer,
        continuous_inner: cont_inner,
        outer,
        inner,
        stage: ctl.stage,
        verification,
    })
}

/// Largest deviation from all-pass over the grid:
/// `max ‖P(z)P(z)ᴴ − I‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerReport {
    pub max_residual: f64,
    pub passed: bool,
}

pub fn verify_inner(sys: &StateSpaceModel, points: &[Complex64], tol: f64) -> Result<InnerReport> {
    let p = sys.outputs();
    let eye = CMat::identity(p, p);
    let max_residual = sys
        .frequency_response(points)?
        .iter()
        .map(|v| (v * v.adjoint() - &eye).norm())
        .fold(0.0, f64::max);
    Ok(InnerReport { max_residual, passed: max_residual < tol })
}

/// Smallest `m`-th singular value of the response on the stability boundary
/// and on two contours outside it (radii 1.05 and 1.5 in the `z` plane; the
/// continuous domain uses the bilinear images of the same points).
pub fn outer_min_singular_value(sys: &StateSpaceModel, omega0: f64) -> Result<f64> {
    let mut zs: Vec<Complex64> = FrequencyGrid::full_unit_circle(512).points().to_vec();
    for radius in [1.05, 1.5] {
        zs.extend(FrequencyGrid::full_unit_circle(128).points().iter().map(|z| z * radius));
    }
    let points: Vec<Complex64> = match sys.domain() {
        Domain::DiscreteZ => zs,
        Domain::ContinuousS => zs
            .into_iter()
            .filter(|z| (z + 1.0).norm() > 1e-6)
            .map(|z| (z - 1.0) / (z + 1.0) * omega0)
            .collect(),
    };
    let m = sys.inputs();
    let values = map_slice(&points, Execution::default(), |&z| {
        sys.eval(z).map(|v| {
            let s = complex_singular_values(&v);
            if s.len() < m { 0.0 } else { s[m - 1] }
        })
    });
    values.into_iter().try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
}

fn unstable_zero_count(p: &StateSpaceModel) -> Option<usize> {
    let zeros = transmission_zeros_square(p).ok()?;
    Some(match p.domain() {
        Domain::DiscreteZ => zeros.iter().filter(|z| z.norm() > 1.0).count(),
        Domain::ContinuousS => zeros.iter().filter(|z| z.re > 0.0).count(),
    })
}

fn verify_factorization(
    plant: &StateSpaceModel,
    outer: &StateSpaceModel,
    inner: &StateSpaceModel,
    ell: usize,
    points: &[Complex64],
    cfg: &FactorizationConfig,
) -> Result<VerificationReport> {
    let inner_report = verify_inner(inner, points, cfg.inner_tol)?;
    let p_resp = plant.frequency_response(points)?;
    let o_resp = outer.frequency_response(points)?;
    let i_resp = inner.frequency_response(points)?;
    let mut product_residual: f64 = 0.0;
    let mut p_max: f64 = 0.0;
    for ((pv, ov), iv) in p_resp.iter().zip(&o_resp).zip(&i_resp) {
        product_residual = product_residual.max((pv - ov * iv).norm());
        p_max = p_max.max(pv.norm());
    }
    let product_bound = cfg.product_tol * (1.0 + p_max);
    let outer_min = outer_min_singular_value(outer, cfg.omega0)?;
    let poles = eigenvalues(inner.a());
    let inner_poles_stable = match inner.domain() {
        Domain::DiscreteZ => poles.iter().all(|z| z.norm() < 1.0),
        Domain::ContinuousS => poles.iter().all(|z| z.re < 0.0),
    };
    let zero_count = unstable_zero_count(plant);
    let ell_passed = inner.n() == ell && poles.len() == ell && zero_count.is_none_or(|c| c == ell);
    let inner_passed = inner_report.passed;
    let product_passed = product_residual < product_bound;
    let outer_passed = outer_min > cfg.outer_threshold;
    Ok(VerificationReport {
        grid_points: points.len(),
        inner_residual: inner_report.max_residual,
        product_residual,
        product_bound,
        outer_min_singular_value: outer_min,
        unstable_zero_count: zero_count,
        ell,
        inner_poles: poles.iter().map(|z| (z.re, z.im)).collect(),
        inner_poles_stable,
        inner_passed,
        product_passed,
        outer_passed,
        ell_passed,
        passed: inner_passed && product_passed && outer_passed && ell_passed && inner_poles_stable,
    })
}

/// Residuals of the six substitution identities linking the plant blocks to
/// the factor realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResiduals {
    pub h1_bhat_a12: f64,
    pub h2_bhat_a22: f64,
    pub j_bhat_c2: f64,
    pub h1_u_b1: f64,
    pub h2_u_b2: f64,
    pub j_u_d: f64,
}

/// Non-minimal `(n + ℓ)`-state realization of `Pₒ Pᵢ` and its transformed
/// form in which the inner-factor states are unobservable.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRealization {
    /// States `(xᵢ, xₒ)`: inner factor first, then the outer factor.
    pub raw: StateSpaceModel,
    /// States `(xᵢ, x₁, x₂ − xᵢ)` with `(x₁, x₂) = V xₒ`.
    pub transformed: StateSpaceModel,
    /// `transformed` state `= T ·` raw state.
    pub transform: Mat,
    /// Eigenvalues of the decoupled, unobservable block.
    pub unobservable_eigenvalues: Vec<Complex64>,
    pub identities: IdentityResiduals,
    /// Largest entry of the block coupling `xᵢ` into the output or into the
    /// other states after transformation.
    pub decoupling_residual: f64,
}

impl CascadeRealization {
    /// Discrete images (same state coordinates) of both realizations.
    pub fn to_discrete(&self, omega0: f64) -> Result<(StateSpaceModel, StateSpaceModel)> {
        Ok((tustin_to_discrete(&self.raw, omega0)?, tustin_to_discrete(&self.transformed, omega0)?))
    }
}

/// Builds the cascade realization of the continuous-stage factors and checks
/// the substitution identities.
pub fn build_cascade(result: &FactorizationResult, cfg: &FactorizationConfig) -> Result<CascadeRealization> {
    let plant = &result.continuous_plant;
    let st = &result.stage;
    let (n, ell) = (plant.n(), st.ell);
    let k = n - ell;
    if st.v.shape() != (n, n) || st.a_hat.shape() != (ell, ell) {
        return Err(Error::DimensionMismatch("factorization does not match plant".into()));
    }
    let v = &st.v;
    let ab = v * plant.a() * v.transpose();
    let bb = v * plant.g();
    let cb = plant.c() * v.transpose();
    let d = plant.h();
    let hv = &st.h * v.transpose();
    let (h1, h2) = (hv.columns(0, k).into_owned(), hv.columns(k, ell).into_owned());
    let bhat_t = st.b_hat.transpose();
    let u_t = st.u.transpose();
    let a12 = ab.view((0, k), (k, ell)).into_owned();
    let a22 = ab.view((k, k), (ell, ell)).into_owned();
    let b1 = bb.rows(0, k).into_owned();
    let b2 = bb.rows(k, ell).into_owned();
    let c2 = cb.columns(k, ell).into_owned();
    let tol = cfg.identity_tol;
    let identities = IdentityResiduals {
        h1_bhat_a12: check_identity("H1' Bhat' = -A12", &(h1.transpose() * &bhat_t), &-&a12, tol)?,
        h2_bhat_a22: check_identity(
            "H2' Bhat' = Ahat' - A22",
            &(h2.transpose() * &bhat_t),
            &(st.a_hat.transpose() - &a22),
            tol,
        )?,
        j_bhat_c2: check_identity("J' Bhat' = -C2", &(st.j.transpose() * &bhat_t), &-&c2, tol)?,
        h1_u_b1: check_identity("H1' U' = B1", &(h1.transpose() * &u_t), &b1, tol)?,
        h2_u_b2: check_identity(
            "H2' U' = Chat' + B2",
            &(h2.transpose() * &u_t),
            &(st.c_hat.transpose() + &b2),
            tol,
        )?,
        j_u_d: check_identity("J' U' = D", &(st.j.transpose() * &u_t), d, tol)?,
    };

    let size = n + ell;
    let m = plant.inputs();
    let p = plant.outputs();
    let h_t = st.h.transpose();
    let mut a = Mat::zeros(size, size);
    a.view_mut((0, 0), (ell, ell)).copy_from(&st.a_hat.transpose());
    a.view_mut((ell, 0), (n, ell)).copy_from(&(&h_t * &bhat_t));
    a.view_mut((ell, ell), (n, n)).copy_from(plant.a());
    let mut b = Mat::zeros(size, m);
    b.view_mut((0, 0), (ell, m)).copy_from(&st.c_hat.transpose());
    b.view_mut((ell, 0), (n, m)).copy_from(&(&h_t * &u_t));
    let mut c = Mat::zeros(p, size);
    c.view_mut((0, 0), (p, ell)).copy_from(&(st.j.transpose() * &bhat_t));
    c.view_mut((0, ell), (p, n)).copy_from(plant.c());
    let raw = StateSpaceModel::new(a, b, c, st.j.transpose() * &u_t, Domain::ContinuousS)?;

    let mut t = Mat::zeros(size, size);
    t.view_mut((0, 0), (ell, ell)).fill_with_identity();
    t.view_mut((ell, ell), (n, n)).copy_from(v);
    for i in 0..ell {
        t[(ell + k + i, i)] = -1.0;
    }
    let t_inv = inverse(&t).ok_or_else(|| Error::InvalidInput("singular cascade transform".into()))?;
    let transformed = StateSpaceModel::new(
        &t * raw.a() * &t_inv,
        &t * raw.g(),
        raw.c() * &t_inv,
        raw.h().clone(),
        Domain::ContinuousS,
    )?;
    let scale = 1.0 + raw.a().norm() + raw.c().norm();
    let decoupling_residual = if ell == 0 {
        0.0
    } else {
        let coupling_a = transformed.a().view((ell, 0), (n, ell)).abs().max();
        let coupling_c = transformed.c().columns(0, ell).abs().max();
        coupling_a.max(coupling_c) / scale
    };
    if decoupling_residual > 1e-9 {
        return Err(Error::IdentityViolation {
            name: "inner states decoupled from output",
            residual: decoupling_residual,
        });
    }
    Ok(CascadeRealization {
        unobservable_eigenvalues: eigenvalues(&st.a_hat.transpose()),
        raw,
        transformed,
        transform: t,
        identities,
        decoupling_residual,
    })
}
