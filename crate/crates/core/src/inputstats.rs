//! Second-order statistics of the unknown input and their transformation
//! through an inner factor.
//!
//! Conventions: `R(τ) = E[(x_t − x̄)(x_{t+τ} − x̄)ᵀ]`, so `R(−τ) = R(τ)ᵀ`, and
//! `Φ(ω) = Σ_τ R(τ) e^{jωτ}`. With these, a signal filtered by `P` has
//! spectrum `P(e^{jω}) Φ(ω) P(e^{jω})ᴴ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{complex_solve, to_complex, CMat, Mat, Vector};
use crate::statespace::{Domain, StateSpaceModel};

/// Estimator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdConfig {
    /// Largest autocovariance lag.
    pub tau_max: usize,
    /// The grid is `ω_k = πk / intervals`, `k = 0..=intervals`.
    pub intervals: usize,
    /// Hann segment length for the averaged periodogram (50 % overlap).
    pub segment_len: usize,
    /// Leading samples discarded before estimation.
    pub burn_in: usize,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self { tau_max: 128, intervals: 512, segment_len: 96, burn_in: 0 }
    }
}

/// Mean, autocovariance and spectrum of a vector signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalStats {
    pub mean: Vector,
    /// `R(0), .., R(τ_max)`.
    pub autocov: Vec<Mat>,
    /// `Φ(ω_k)` on `frequencies`.
    pub psd: Vec<CMat>,
    /// `ω_k = πk / intervals`, `k = 0..=intervals`.
    pub frequencies: Vec<f64>,
}

/// `ω_k = πk / intervals`, `k = 0..=intervals`.
pub fn frequency_grid(intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|k| PI * k as f64 / intervals as f64).collect()
}

impl SignalStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn intervals(&self) -> usize {
        self.frequencies.len().saturating_sub(1)
    }

    /// Statistics determined by a mean and a spectrum on the standard grid;
    /// autocovariances come from the inverse transform.
    pub fn from_psd(mean: Vector, psd: Vec<CMat>, tau_max: usize) -> Result<Self> {
        if psd.len() < 2 {
            return Err(Error::GridMismatch("spectrum needs at least two grid points".into()));
        }
        if psd.iter().any(|p| p.shape() != (mean.len(), mean.len())) {
            return Err(Error::GridMismatch("spectrum blocks do not match the mean".into()));
        }
        let intervals = psd.len() - 1;
        let autocov = (0..=tau_max).map(|tau| inverse_transform(&psd, tau)).collect();
        Ok(Self { mean, autocov, psd, frequencies: frequency_grid(intervals) })
    }

    /// `∫₀^π tr Φ(ω) dω` by the trapezoidal rule.
    pub fn trace_integral(&self) -> f64 {
        let h = PI / self.intervals() as f64;
        let tr: Vec<f64> = self.psd.iter().map(|p| p.trace().re).collect();
        let inner: f64 = tr[1..tr.len() - 1].iter().sum();
        h * (inner + 0.5 * (tr[0] + tr[tr.len() - 1]))
    }
}

/// `R(τ) = (1/N) Σ_k Φ(ω_k) e^{−jω_kτ}` over the full circle (`N = 2 · intervals`),
/// with negative frequencies filled in by `Φ(−ω) = conj Φ(ω)`.
fn inverse_transform(psd: &[CMat], tau: usize) -> Mat {
    let intervals = psd.len() - 1;
    let n_full = 2 * intervals;
    let mut acc = psd[0].map(|v| v.re) + psd[intervals].map(|v| v.re) * if tau.is_multiple_of(2) { 1.0 } else { -1.0 };
    for (k, phi) in psd.iter().enumerate().take(intervals).skip(1) {
        let rot = Complex64::from_polar(1.0, -PI * k as f64 * tau as f64 / intervals as f64);
        acc += (phi * rot).map(|v| 2.0 * v.re);
    }
    acc / n_full as f64
}

/// Sample mean, biased autocovariance and Hann-windowed averaged periodogram.
pub fn estimate_stats(samples: &[Vector], cfg: &PsdConfig) -> Result<SignalStats> {
    let data = samples.get(cfg.burn_in..).unwrap_or(&[]);
    let t = data.len();
    let needed = (10 * cfg.tau_max).max(cfg.segment_len).max(1);
    if t < needed {
        return Err(Error::TooFewSamples { got: t, needed });
    }
    let nfft = 2 * cfg.intervals;
    if cfg.segment_len < 2 || cfg.segment_len > nfft {
        return Err(Error::InvalidInput("segment length must lie in [2, 2 * intervals]".into()));
    }
    let dim = data[0].len();
    if data.iter().any(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch("samples have different lengths".into()));
    }
    let mean = data.iter().fold(Vector::zeros(dim), |acc, x| acc + x) / t as f64;
    let centered: Vec<Vector> = data.iter().map(|x| x - &mean).collect();

    let autocov = (0..=cfg.tau_max)
        .map(|tau| {
            let mut r = Mat::zeros(dim, dim);
            for i in 0..t - tau {
                r += &centered[i] * centered[i + tau].transpose();
            }
            r / t as f64
        })
        .collect();

    let len = cfg.segment_len;
    let window: Vec<f64> = (0..len).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / len as f64).cos()).collect();
    let power: f64 = window.iter().map(|w| w * w).sum();
    let hop = (len / 2).max(1);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let mut psd = vec![CMat::zeros(dim, dim); cfg.intervals + 1];
    let mut segments = 0usize;
    let mut buffers = vec![vec![Complex64::new(0.0, 0.0); nfft]; dim];
    let mut start = 0;
    while start + len <= t {
        for (ch, buf) in buffers.iter_mut().enumerate() {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for k in 0..len {
                buf[k] = Complex64::new(window[k] * centered[start + k][ch], 0.0);
            }
            fft.process(buf);
        }
        for (k, phi) in psd.iter_mut().enumerate() {
            for i in 0..dim {
                for j in 0..dim {
                    phi[(i, j)] += buffers[i][k] * buffers[j][k].conj();
                }
            }
        }
        segments += 1;
        start += hop;
    }
    let norm = segments as f64 * power;
    psd.iter_mut().for_each(|p| *p /= Complex64::new(norm, 0.0));
    Ok(SignalStats { mean, autocov, psd, frequencies: frequency_grid(cfg.intervals) })
}

fn inner_responses(stats: &SignalStats, inner: &StateSpaceModel) -> Result<(Vec<CMat>, Mat)> {
    inner.require_domain(Domain::DiscreteZ)?;
    if !inner.is_stable() {
        return Err(Error::UnstableA);
    }
    let points: Vec<Complex64> = stats.frequencies.iter().map(|&w| Complex64::from_polar(1.0, w)).collect();
    let resp = inner.frequency_response(&points)?;
    let dc = inner.eval(Complex64::new(1.0, 0.0))?;
    let scale = 1.0 + dc.norm();
    if dc.iter().any(|v| v.im.abs() > 1e-12 * scale) {
        return Err(Error::InvalidInput("inner factor has a complex DC gain".into()));
    }
    Ok((resp, dc.map(|v| v.re)))
}

fn check_grid(stats: &SignalStats, dim: usize) -> Result<()> {
    if stats.dim() != dim {
        return Err(Error::GridMismatch(format!("statistics have dimension {}, factor expects {dim}", stats.dim())));
    }
    if stats.psd.len() != stats.frequencies.len() || stats.psd.len() < 2 {
        return Err(Error::GridMismatch("spectrum and frequency grid differ in length".into()));
    }
    let expected = frequency_grid(stats.intervals());
    if expected.iter().zip(&stats.frequencies).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::GridMismatch("frequencies are not the uniform grid on [0, pi]".into()));
    }
    Ok(())
}

/// Statistics of `f = Pᵢ d` given those of `d`: `f̄ = Pᵢ(1) d̄` and
/// `Φ_ff = Pᵢ Φ_dd Pᵢᴴ`; autocovariances by inverse transform.
pub fn push_through_inner(stats_d: &SignalStats, inner: &StateSpaceModel) -> Result<SignalStats> {
    check_grid(stats_d, inner.inputs())?;
    let (resp, dc) = inner_responses(stats_d, inner)?;
    let psd = resp.iter().zip(&stats_d.psd).map(|(p, phi)| p * phi * p.adjoint()).collect();
    SignalStats::from_psd(&dc * &stats_d.mean, psd, stats_d.autocov.len().saturating_sub(1))
}

/// Statistics of `d` given those of `f = Pᵢ d`: `d̄ = Pᵢ(1)ᵀ f̄` and
/// `Φ_dd = Pᵢᴴ Φ_ff Pᵢ`; autocovariances by inverse transform.
pub fn recover_d_stats(stats_f: &SignalStats, inner: &StateSpaceModel) -> Result<SignalStats> {
    check_grid(stats_f, inner.outputs())?;
    let (resp, dc) = inner_responses(stats_f, inner)?;
    let psd = resp.iter().zip(&stats_f.psd).map(|(p, phi)| p.adjoint() * phi * p).collect();
    SignalStats::from_psd(dc.transpose() * &stats_f.mean, psd, stats_f.autocov.len().saturating_sub(1))
}

/// Spectrum of the vector autoregression `d_t = Σ_k A_k d_{t−k} + e_t`,
/// `cov(e) = Σ`, at the given frequencies: `H Σ Hᴴ` with
/// `H = (I − Σ_k A_k e^{−jωk})⁻¹`.
pub fn ar_spectrum(coeffs: &[Mat], innovation_cov: &Mat, frequencies: &[f64]) -> Result<Vec<CMat>> {
    let m = innovation_cov.nrows();
    if coeffs.iter().any(|a| a.shape() != (m, m)) {
        return Err(Error::DimensionMismatch("AR coefficients must be m x m".into()));
    }
    let sigma = to_complex(innovation_cov);
    frequencies
        .iter()
        .map(|&w| {
            let mut den = CMat::identity(m, m);
            for (k, a) in coeffs.iter().enumerate() {
                den -= to_complex(a) * Complex64::from_polar(1.0, -w * (k + 1) as f64);
            }
            let h = complex_solve(&den, &CMat::identity(m, m)).ok_or(Error::NearPole)?;
            Ok(&h * &sigma * h.adjoint())
        })
        .collect()
}
