//! Dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Relative singular-value threshold used by every rank decision.
pub const RANK_TOL: f64 = 1e-8;
/// Minimum ratio between the last kept and the first dropped singular value.
pub const GAP_GUARD: f64 = 10.0;

/// Singular values in descending order. Empty matrices have none.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn complex_singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Outcome of a rank decision on a list of descending singular values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankDecision {
    pub rank: usize,
    /// Ratio of the last kept to the first dropped value; infinite when
    /// nothing was dropped or nothing was kept.
    pub gap: f64,
}

/// Counts values above `tol * values[0]`.
pub fn rank_decision(values: &[f64], tol: f64) -> RankDecision {
    let top = values.first().copied().unwrap_or(0.0);
    if top <= f64::MIN_POSITIVE {
        return RankDecision { rank: 0, gap: f64::INFINITY };
    }
    let rank = values.iter().filter(|&&s| s > tol * top).count();
    let gap = if rank == values.len() || values[rank] <= 0.0 {
        f64::INFINITY
    } else {
        values[rank - 1] / values[rank]
    };
    RankDecision { rank, gap }
}

pub fn numerical_rank(m: &Mat, tol: f64) -> usize {
    rank_decision(&singular_values(m), tol).rank
}

/// Full right-singular basis of `m` (columns of V, in descending order of
/// singular value) together with the singular values, padded with zeros so
/// that there is one value per column.
fn right_singular_basis(m: &Mat) -> (Mat, Vec<f64>) {
    let cols = m.ncols();
    let padded = if m.nrows() < cols {
        let mut p = Mat::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut v = Mat::zeros(cols, cols);
    let mut s = Vec::with_capacity(cols);
    for (k, &i) in order.iter().enumerate() {
        v.set_column(k, &vt.row(i).transpose());
        s.push(svd.singular_values[i]);
    }
    (v, s)
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &Mat, tol: f64) -> Mat {
    let cols = m.ncols();
    if cols == 0 {
        return Mat::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return Mat::identity(cols, cols);
    }
    let (v, s) = right_singular_basis(m);
    let rank = rank_decision(&s, tol).rank;
    v.columns(rank, cols - rank).into_owned()
}

/// Moore–Penrose pseudo-inverse with relative cut-off `tol`.
pub fn pinv(m: &Mat, tol: f64) -> Mat {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.max();
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V");
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * top && s > 0.0 {
            out += vt.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// Nearest matrix with orthonormal columns (polar factor) of a square or
/// tall matrix.
pub fn polar_factor(m: &Mat) -> Mat {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Mat::zeros(m.nrows(), m.ncols());
    }
    let svd = m.clone().svd(true, true);
    svd.u.expect("requested U") * svd.v_t.expect("requested V")
}

/// Eigenvalues of a real square matrix, sorted by real part then imaginary
/// part.
pub fn eigenvalues(a: &Mat) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<Complex64> = a.clone().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    ev
}

/// Largest eigenvalue modulus; zero for empty matrices.
pub fn spectral_radius(a: &Mat) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest real part of the eigenvalues; minus infinity for empty matrices.
pub fn spectral_abscissa(a: &Mat) -> f64 {
    eigenvalues(a).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * a[(i, j)]));
        }
    }
    out
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Solves `a x = b` by LU; `None` when `a` is singular or the result is not
/// finite.
pub fn solve(a: &Mat, b: &Mat) -> Option<Mat> {
    if a.nrows() == 0 {
        return Some(Mat::zeros(0, b.ncols()));
    }
    let x = a.clone().lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn complex_solve(a: &CMat, b: &CMat) -> Option<CMat> {
    if a.nrows() == 0 {
        return Some(CMat::zeros(0, b.ncols()));
    }
    let x = a.clone().lu().solve(b)?;
    x.iter().all(|v| v.re.is_finite() && v.im.is_finite()).then_some(x)
}

pub fn inverse(a: &Mat) -> Option<Mat> {
    solve(a, &Mat::identity(a.nrows(), a.nrows()))
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// `[B, AB, .., A^{n-1}B]`.
pub fn reachability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// `[C; CA; ..; CA^{n-1}]`.
pub fn observability_matrix(a: &Mat, c: &Mat) -> Mat {
    reachability_matrix(&a.transpose(), &c.transpose()).transpose()
}

/// True when every eigenvalue `lambda` of `a` selected by `region` satisfies
/// `rank [lambda I - A, B] = n`.
pub fn pbh_full_rank(a: &Mat, b: &Mat, region: impl Fn(Complex64) -> bool) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let scale = 1.0 + a.norm().max(b.norm());
    eigenvalues(a).into_iter().filter(|&l| region(l)).all(|l| {
        let mut pencil = CMat::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                let diag = if i == j { l } else { Complex64::new(0.0, 0.0) };
                pencil[(i, j)] = diag - a[(i, j)];
            }
            for j in 0..b.ncols() {
                pencil[(i, n + j)] = Complex64::new(b[(i, j)], 0.0);
            }
        }
        let s = complex_singular_values(&pencil);
        s.len() >= n && s[n - 1] > 1e-9 * scale
    })
}
