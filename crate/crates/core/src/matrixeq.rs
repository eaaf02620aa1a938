//! Lyapunov and Riccati solvers, symmetric eigendecomposition and spectral
//! factorization.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    eigenvalues, inverse, kron, null_space, numerical_rank, observability_matrix,
    pbh_full_rank, solve, spectral_abscissa, spectral_radius, symmetrize, Mat, RANK_TOL,
};
use crate::statespace::{Domain, StateSpaceModel};

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`. Each
    /// column's largest-magnitude entry is positive.
    pub vectors: Mat,
}

impl SymEig {
    /// Orthogonal `V` with `V S Vᵀ = diag(values)`.
    pub fn transform(&self) -> Mat {
        self.vectors.transpose()
    }
}

const JACOBI_SWEEPS: usize = 30;
const JACOBI_TOL: f64 = 1e-13;

/// Cyclic Jacobi eigendecomposition. The input is symmetrized first.
pub fn symeig(s: &Mat) -> SymEig {
    let n = s.nrows();
    let mut a = symmetrize(s);
    let mut v = Mat::identity(n, n);
    let scale = a.norm();
    for _ in 0..JACOBI_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let mut vectors = Mat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col = v.column(i).into_owned();
        let lead = col.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            col = -col;
        }
        vectors.set_column(k, &col);
    }
    SymEig {
        values: order.iter().map(|&i| a[(i, i)]).collect(),
        vectors,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    pub x: Mat,
    pub residual_norm: f64,
}

fn vec_solve(op: Mat, w: &Mat) -> Result<Mat> {
    let n = w.nrows();
    let rhs = Mat::from_column_slice(n * n, 1, w.as_slice()) * -1.0;
    let sol = solve(&op, &rhs).ok_or(Error::UnstableA)?;
    Ok(symmetrize(&Mat::from_column_slice(n, n, sol.as_slice())))
}

fn check_square_pair(a: &Mat, w: &Mat) -> Result<()> {
    if a.nrows() != a.ncols() || w.shape() != a.shape() {
        return Err(Error::DimensionMismatch("Lyapunov operands must be square and conformable".into()));
    }
    Ok(())
}

/// Solves `A X + X Aᵀ + W = 0` for Hurwitz `A`.
pub fn solve_lyapunov_continuous(a: &Mat, w: &Mat) -> Result<LyapunovSolution> {
    check_square_pair(a, w)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(LyapunovSolution { x: Mat::zeros(0, 0), residual_norm: 0.0 });
    }
    if spectral_abscissa(a) >= 0.0 {
        return Err(Error::UnstableA);
    }
    let eye = Mat::identity(n, n);
    let x = vec_solve(kron(&eye, a) + kron(a, &eye), &symmetrize(w))?;
    let residual_norm = (a * &x + &x * a.transpose() + w).norm();
    Ok(LyapunovSolution { x, residual_norm })
}

/// Solves `A X Aᵀ − X + W = 0` for Schur-stable `A`.
pub fn solve_lyapunov_discrete(a: &Mat, w: &Mat) -> Result<LyapunovSolution> {
    check_square_pair(a, w)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(LyapunovSolution { x: Mat::zeros(0, 0), residual_norm: 0.0 });
    }
    if spectral_radius(a) >= 1.0 {
        return Err(Error::UnstableA);
    }
    let op = kron(a, a) - Mat::identity(n * n, n * n);
    let x = vec_solve(op, &symmetrize(w))?;
    let residual_norm = (a * &x * a.transpose() - &x + w).norm();
    Ok(LyapunovSolution { x, residual_norm })
}

/// Algorithm that produced a Riccati solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RiccatiMethod {
    /// Structure-preserving doubling.
    Doubling,
    /// Covariance recursion iterated to its fixed point.
    FixedPoint,
    /// Matrix sign function of the Hamiltonian, refined by Newton steps.
    MatrixSign,
    /// Closed-form zero solution (no forcing term, stable dynamics).
    Trivial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub x: Mat,
    /// Predictor gain `AXCᵀ(CXCᵀ+R)⁻¹` for the discrete filter equation,
    /// feedback gain `R⁻¹BᵀX` for the continuous control equation.
    pub gain: Mat,
    pub residual_norm: f64,
    /// Spectral radius (discrete) or abscissa (continuous) of the closed loop.
    pub closed_loop: f64,
    pub method: RiccatiMethod,
    /// The equation was solved with `Q` and `R` divided by this factor.
    pub scale: f64,
    pub iterations: usize,
}

fn require_pd(name: &str, m: &Mat) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let scale = 1.0 + m.norm();
    if (m - m.transpose()).norm() > 1e-10 * scale || symeig(m).values[0] <= 1e-14 * scale {
        return Err(Error::InvalidInput(format!("{name} must be symmetric positive definite")));
    }
    Ok(())
}

fn dare_map(a: &Mat, c: &Mat, q: &Mat, r: &Mat, s: &Mat) -> Option<Mat> {
    let innov = c * s * c.transpose() + r;
    let k = solve(&innov, &(c * s * a.transpose()))?;
    Some(symmetrize(&(a * s * a.transpose() - a * s * c.transpose() * k + q)))
}

fn dare_gain(a: &Mat, c: &Mat, r: &Mat, s: &Mat) -> Option<Mat> {
    let innov = c * s * c.transpose() + r;
    Some(solve(&innov, &(c * s * a.transpose()))?.transpose())
}

fn doubling(a: &Mat, c: &Mat, q: &Mat, r: &Mat) -> Option<(Mat, usize)> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    let mut ak = a.transpose();
    let mut gk = c.transpose() * solve(r, c)?;
    let mut hk = q.clone();
    for it in 1..=80 {
        let w = &eye + &gk * &hk;
        let w_ak = solve(&w, &ak)?;
        let w_gk = solve(&w, &gk)?;
        let next_h = symmetrize(&(&hk + ak.transpose() * &hk * &w_ak));
        let next_g = symmetrize(&(&gk + &ak * &w_gk * ak.transpose()));
        let next_a = &ak * &w_ak;
        let delta = (&next_h - &hk).norm();
        hk = next_h;
        gk = next_g;
        ak = next_a;
        if !hk.iter().all(|v| v.is_finite()) {
            return None;
        }
        if delta <= 1e-15 * (1.0 + hk.norm()) {
            return Some((hk, it));
        }
    }
    Some((hk, 80))
}

fn fixed_point(a: &Mat, c: &Mat, q: &Mat, r: &Mat) -> Option<(Mat, usize)> {
    let mut s = q.clone();
    for it in 1..=200_000 {
        let next = dare_map(a, c, q, r, &s)?;
        let delta = (&next - &s).norm();
        s = next;
        if !s.iter().all(|v| v.is_finite()) {
            return None;
        }
        if delta <= 1e-15 * (1.0 + s.norm()) {
            return Some((s, it));
        }
    }
    None
}

/// Stabilizing solution of the filter Riccati equation
/// `Σ = AΣAᵀ − AΣCᵀ(CΣCᵀ+R)⁻¹CΣAᵀ + Q` with predictor gain `L`.
///
/// The equation is solved for `Q/s`, `R/s` with `s = max(1, ‖Q‖_F)` and the
/// solution scaled back. Doubling is tried first, then the plain covariance
/// recursion.
pub fn solve_dare(a: &Mat, c: &Mat, q: &Mat, r: &Mat) -> Result<RiccatiSolution> {
    let n = a.nrows();
    let p = c.nrows();
    if a.ncols() != n || c.ncols() != n || q.shape() != (n, n) || r.shape() != (p, p) {
        return Err(Error::DimensionMismatch("DARE operands".into()));
    }
    require_pd("R", r)?;
    if !pbh_full_rank(&a.transpose(), &c.transpose(), |l| l.norm() >= 1.0 - 1e-12) {
        return Err(Error::NotDetectable);
    }
    if !pbh_full_rank(a, q, |l| (l.norm() - 1.0).abs() < 1e-9) {
        return Err(Error::NotStabilizable);
    }
    let q = symmetrize(q);
    let scale = q.norm().max(1.0);
    let (qs, rs) = (&q / scale, r / scale);

    let finish = |x: Mat, method, iterations| -> Option<RiccatiSolution> {
        let x = x * scale;
        let gain = dare_gain(a, c, r, &x)?;
        let residual_norm = (dare_map(a, c, &q, r, &x)? - &x).norm();
        let closed_loop = spectral_radius(&(a - &gain * c));
        let psd = n == 0 || symeig(&x).values[0] >= -1e-9 * (1.0 + x.norm());
        let ok = residual_norm < 1e-8 * (1.0 + x.norm()) && closed_loop < 1.0 && psd;
        ok.then_some(RiccatiSolution { x, gain, residual_norm, closed_loop, method, scale, iterations })
    };

    if let Some(sol) = doubling(a, c, &qs, &rs).and_then(|(x, it)| finish(x, RiccatiMethod::Doubling, it)) {
        return Ok(sol);
    }
    fixed_point(a, c, &qs, &rs)
        .and_then(|(x, it)| finish(x, RiccatiMethod::FixedPoint, it))
        .ok_or_else(|| Error::IterationDiverged("filter Riccati equation".into()))
}

fn care_residual(a: &Mat, b: &Mat, q: &Mat, r_inv_bt: &Mat, x: &Mat) -> f64 {
    (x * a + a.transpose() * x - x * b * r_inv_bt * x + q).norm()
}

fn matrix_sign(h: &Mat) -> Option<Mat> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    let mut scaling = true;
    for _ in 0..100 {
        let inv = inverse(&z)?;
        let c = if scaling {
            let det = z.clone().lu().determinant().abs();
            if det > 0.0 && det.is_finite() {
                det.powf(-1.0 / dim)
            } else {
                1.0
            }
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let delta = (&next - &z).norm();
        z = next;
        if delta <= 1e-2 * z.norm() {
            scaling = false;
        }
        if delta <= 1e-14 * z.norm() {
            return Some(z);
        }
    }
    (z.iter().all(|v| v.is_finite())).then_some(z)
}

/// Stabilizing solution of `XA + AᵀX − XBR⁻¹BᵀX + Q = 0`.
///
/// Uses the matrix sign function of the Hamiltonian followed by Newton
/// (Kleinman) refinement. A zero forcing term with Hurwitz `A` returns the
/// zero solution directly.
pub fn solve_care(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<RiccatiSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::DimensionMismatch("CARE operands".into()));
    }
    require_pd("R", r)?;
    let q = symmetrize(q);
    let r_inv_bt = solve(r, &b.transpose()).ok_or_else(|| Error::InvalidInput("R is singular".into()))?;
    let gain_of = |x: &Mat| &r_inv_bt * x;
    if n == 0 {
        return Ok(RiccatiSolution {
            x: Mat::zeros(0, 0),
            gain: Mat::zeros(m, 0),
            residual_norm: 0.0,
            closed_loop: f64::NEG_INFINITY,
            method: RiccatiMethod::Trivial,
            scale: 1.0,
            iterations: 0,
        });
    }
    if q.norm() == 0.0 && spectral_abscissa(a) < 0.0 {
        return Ok(RiccatiSolution {
            x: Mat::zeros(n, n),
            gain: Mat::zeros(m, n),
            residual_norm: 0.0,
            closed_loop: spectral_abscissa(a),
            method: RiccatiMethod::Trivial,
            scale: 1.0,
            iterations: 0,
        });
    }
    if !pbh_full_rank(a, b, |l| l.re >= 0.0) {
        return Err(Error::NotStabilizable);
    }
    let brb = b * &r_inv_bt;
    let mut ham = Mat::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&-&brb);
    ham.view_mut((n, 0), (n, n)).copy_from(&-&q);
    ham.view_mut((n, n), (n, n)).copy_from(&-a.transpose());
    // Relative to each eigenvalue, with a floor at the rounding level of the
    // whole Hamiltonian.
    let floor = 100.0 * f64::EPSILON * ham.norm();
    if eigenvalues(&ham).iter().any(|l| l.re.abs() <= 1e-9 * (1.0 + l.norm()) + floor) {
        return Err(Error::RiccatiFailure("Hamiltonian has eigenvalues on the imaginary axis".into()));
    }
    let sign = matrix_sign(&ham).ok_or_else(|| Error::RiccatiFailure("sign iteration broke down".into()))?;
    let eye = Mat::identity(n, n);
    let mut lhs = Mat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&sign.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(sign.view((n, n), (n, n)) + &eye));
    let mut rhs = Mat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&-(sign.view((0, 0), (n, n)) + &eye));
    rhs.view_mut((n, 0), (n, n)).copy_from(&-sign.view((n, 0), (n, n)));
    let mut x = symmetrize(
        &lhs.svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::RiccatiFailure(e.to_string()))?,
    );

    let mut residual = care_residual(a, b, &q, &r_inv_bt, &x);
    let mut iterations = 0;
    for _ in 0..4 {
        let f = gain_of(&x);
        let closed = a - b * &f;
        let w = &q + f.transpose() * r * &f;
        let Ok(next) = solve_lyapunov_continuous(&closed.transpose(), &w) else { break };
        let next_res = care_residual(a, b, &q, &r_inv_bt, &next.x);
        if !(next_res < residual) {
            break;
        }
        x = next.x;
        residual = next_res;
        iterations += 1;
    }
    let gain = gain_of(&x);
    let closed_loop = spectral_abscissa(&(a - b * &gain));
    if !(residual < 1e-8 * (1.0 + x.norm())) || closed_loop >= 0.0 {
        return Err(Error::RiccatiFailure(format!(
            "no stabilizing solution (residual {residual:.3e}, closed-loop abscissa {closed_loop:.3e})"
        )));
    }
    Ok(RiccatiSolution {
        x,
        gain,
        residual_norm: residual,
        closed_loop,
        method: RiccatiMethod::MatrixSign,
        scale: 1.0,
        iterations,
    })
}

/// Which side the spectral factor shares with the original system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `PₒPₒ~ = PP~`, factor realized with the same `A` and `C`.
    Estimation,
    /// `Pₒ~Pₒ = P~P`, factor realized with the same `A` and `G`.
    Control,
}

/// Stable spectral factor of a stable continuous system with zeros moved to
/// the open left half-plane.
pub fn spectral_factor_continuous(sys: &StateSpaceModel, orientation: Orientation) -> Result<StateSpaceModel> {
    sys.require_domain(Domain::ContinuousS)?;
    if !sys.is_stable() {
        return Err(Error::UnstableA);
    }
    match orientation {
        Orientation::Estimation => estimation_factor(sys),
        Orientation::Control => Ok(estimation_factor(&sys.transpose())?.transpose()),
    }
}

fn estimation_factor(sys: &StateSpaceModel) -> Result<StateSpaceModel> {
    let (a, b, c, d) = (sys.a(), sys.g(), sys.c(), sys.h());
    let (p, m) = (sys.outputs(), sys.inputs());
    let rank_d = numerical_rank(d, RANK_TOL);
    if rank_d == m && m > 0 {
        column_rank_factor(a, b, c, d)
    } else if rank_d == p && p > 0 {
        row_rank_factor(a, b, c, d)
    } else if m == 0 || p == 0 {
        Ok(sys.clone())
    } else {
        Err(Error::SingularFeedthrough)
    }
}

/// Feedthrough of full column rank: only the zeros of `P` move. With
/// `D⁺ = (DᵀD)⁻¹Dᵀ`, `Ã = A − BD⁺C`, `C₁ = D⁺C`, the zeros are the
/// eigenvalues of `Ã` on the unobservable subspace of `((I − DD⁺)C, Ã)`.
/// Reflecting the unstable ones needs the stabilizing solution of
/// `ÃΣ + ΣÃᵀ − ΣC₁ᵀC₁Σ = 0` on that subspace; the factor is then
/// `D + C(sI − A)⁻¹(B + ΣC₁ᵀ)`.
fn column_rank_factor(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<StateSpaceModel> {
    let n = a.nrows();
    let p = d.nrows();
    let dtd = d.transpose() * d;
    let d_plus = solve(&dtd, &d.transpose()).ok_or(Error::SingularFeedthrough)?;
    let a_t = a - b * &d_plus * c;
    let c1 = &d_plus * c;
    let c_perp = (Mat::identity(p, p) - d * &d_plus) * c;
    let basis = if c_perp.norm() <= 1e-12 * (1.0 + c.norm()) {
        Mat::identity(n, n)
    } else {
        null_space(&observability_matrix(&a_t, &c_perp), RANK_TOL)
    };
    let k = basis.ncols();
    let sigma = if k == 0 {
        Mat::zeros(n, n)
    } else {
        let a_z = basis.transpose() * &a_t * &basis;
        let c_z = &c1 * &basis;
        let sol = solve_care(&a_z.transpose(), &c_z.transpose(), &Mat::zeros(k, k), &Mat::identity(c_z.nrows(), c_z.nrows()))
            .map_err(|e| match e {
                Error::NotStabilizable => Error::RiccatiFailure("zero dynamics are not detectable".into()),
                e => e,
            })?;
        &basis * sol.x * basis.transpose()
    };
    let b_o = b + sigma * c1.transpose();
    StateSpaceModel::new(a.clone(), b_o, c.clone(), d.clone(), Domain::ContinuousS)
}

/// Feedthrough of full row rank: the standard filter Riccati equation with
/// `R = DDᵀ`. The factor's feedthrough is the lower Cholesky factor of `R`
/// (positive diagonal).
fn row_rank_factor(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<StateSpaceModel> {
    let m = d.ncols();
    let r = d * d.transpose();
    let r_inv_d = solve(&r, d).ok_or(Error::SingularFeedthrough)?;
    let r_inv_c = solve(&r, c).ok_or(Error::SingularFeedthrough)?;
    let a_bar = a - b * d.transpose() * &r_inv_c;
    let q_bar = symmetrize(&(b * (Mat::identity(m, m) - d.transpose() * &r_inv_d) * b.transpose()));
    let sol = solve_care(&a_bar.transpose(), &c.transpose(), &q_bar, &r)?;
    let gain = solve(&r, &(c * &sol.x + d * b.transpose()))
        .ok_or(Error::SingularFeedthrough)?
        .transpose();
    let chol = r.clone().cholesky().ok_or(Error::SingularFeedthrough)?.l();
    StateSpaceModel::new(a.clone(), gain * &chol, c.clone(), chol, Domain::ContinuousS)
}

/// Residual helper shared by tests and verification code:
/// `max ‖F(s)F(s)ᴴ − P(s)P(s)ᴴ‖_F` over the given points.
pub fn factor_identity_residual(
    factor: &StateSpaceModel,
    sys: &StateSpaceModel,
    points: &[num_complex::Complex64],
) -> Result<f64> {
    let lhs = factor.frequency_response(points)?;
    let rhs = sys.frequency_response(points)?;
    Ok(lhs
        .iter()
        .zip(&rhs)
        .map(|(f, p)| (f * f.adjoint() - p * p.adjoint()).norm())
        .fold(0.0, f64::max))
}

/// Returns `sys` with `eps` added to the diagonal of its feedthrough. This is
/// the explicit regularization for plants whose feedthrough is rank
/// deficient.
pub fn regularize_feedthrough(sys: &StateSpaceModel, eps: f64) -> Result<StateSpaceModel> {
    let (p, m) = (sys.outputs(), sys.inputs());
    let h = sys.h() + Mat::identity(p, m) * eps;
    StateSpaceModel::new(sys.a().clone(), sys.g().clone(), sys.c().clone(), h, sys.domain())?
        .with_noise(sys.q_proc().clone(), sys.r_meas().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn symeig_identity_and_diagonal() {
        let e = symeig(&Mat::identity(3, 3));
        assert_eq!(e.values, vec![1.0; 3]);
        assert_eq!(e.vectors, Mat::identity(3, 3));
        let e = symeig(&Mat::from_diagonal(&crate::linalg::Vector::from_vec(vec![3.0, 1.0])));
        assert_eq!(e.values, vec![1.0, 3.0]);
        assert_eq!(e.transform(), Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn symeig_reconstructs_dense_matrix() {
        let s = Mat::from_row_slice(3, 3, &[4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0]);
        let e = symeig(&s);
        let v = e.transform();
        let d = &v * &s * v.transpose();
        let diag = Mat::from_diagonal(&crate::linalg::Vector::from_vec(e.values.clone()));
        assert!((d - diag).norm() < 1e-12 * s.norm());
        assert!((&v * v.transpose() - Mat::identity(3, 3)).norm() < 1e-13);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn lyapunov_scalars() {
        let x = solve_lyapunov_continuous(&s(-1.0), &s(1.0)).unwrap();
        assert!((x.x[(0, 0)] - 0.5).abs() < 1e-15);
        let x = solve_lyapunov_continuous(&(-Mat::identity(2, 2)), &Mat::identity(2, 2)).unwrap();
        assert!((x.x - Mat::identity(2, 2) * 0.5).norm() < 1e-15);
        let x = solve_lyapunov_discrete(&s(0.5), &s(1.0)).unwrap();
        assert!((x.x[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        let x = solve_lyapunov_discrete(&Mat::zeros(2, 2), &Mat::identity(2, 2)).unwrap();
        assert_eq!(x.x, Mat::identity(2, 2));
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        assert!(matches!(solve_lyapunov_continuous(&s(0.1), &s(1.0)), Err(Error::UnstableA)));
        assert!(matches!(solve_lyapunov_discrete(&s(1.1), &s(1.0)), Err(Error::UnstableA)));
    }

    #[test]
    fn dare_scalar_against_bisection() {
        let sol = solve_dare(&s(0.5), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        let f = |x: f64| 0.25 * x - 0.25 * x * x / (x + 1.0) + 1.0 - x;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((sol.x[(0, 0)] - lo).abs() < 1e-12);
        assert!(sol.closed_loop < 1.0);
    }

    #[test]
    fn dare_without_measurements_is_lyapunov() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.2, 0.0, -0.3]);
        let q = Mat::identity(2, 2);
        let sol = solve_dare(&a, &Mat::zeros(1, 2), &q, &s(1.0)).unwrap();
        let lyap = solve_lyapunov_discrete(&a, &q).unwrap();
        assert!((sol.x - lyap.x).norm() < 1e-12);
    }

    #[test]
    fn dare_rejects_undetectable() {
        let e = solve_dare(&s(1.5), &s(0.0), &s(1.0), &s(1.0));
        assert!(matches!(e, Err(Error::NotDetectable)));
    }

    #[test]
    fn care_scalar_closed_form() {
        let sol = solve_care(&s(-1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((sol.x[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-13);
        let zero = solve_care(&s(-1.0), &s(1.0), &s(0.0), &s(1.0)).unwrap();
        assert_eq!(zero.x[(0, 0)], 0.0);
    }

    #[test]
    fn care_anti_stable_zero_forcing() {
        // X A + A X − X² = 0 with A = 2 has stabilizing root X = 4.
        let sol = solve_care(&s(2.0), &s(1.0), &s(0.0), &s(1.0)).unwrap();
        assert!((sol.x[(0, 0)] - 4.0).abs() < 1e-12);
        assert!(sol.closed_loop < 0.0);
    }

    #[test]
    fn already_outer_factor_is_unchanged() {
        let sys = StateSpaceModel::new(s(-1.0), s(1.0), s(1.0), s(1.0), Domain::ContinuousS).unwrap();
        let f = spectral_factor_continuous(&sys, Orientation::Estimation).unwrap();
        assert_eq!(f, sys);
    }

    #[test]
    fn rank_deficient_feedthrough_rejected() {
        let sys = StateSpaceModel::new(s(-1.0), s(1.0), s(1.0), s(0.0), Domain::ContinuousS).unwrap();
        let e = spectral_factor_continuous(&sys, Orientation::Estimation);
        assert!(matches!(e, Err(Error::SingularFeedthrough)));
    }
}
