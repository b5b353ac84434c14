//! Power dependence of the intrinsic loss from two-level systems:
//!
//! ```text
//! 1/Qi = p·δ_TLS · tanh(hf / 2kT) / sqrt(1 + (n/n_c)^β) + δ_e
//! ```

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, PLANCK};
use crate::optim::{levenberg_marquardt, LmOptions};
use crate::{Error, Result};

/// Default bath temperature, K.
pub const DEFAULT_TEMPERATURE: f64 = 0.010;

/// Parameters of the loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsParams {
    /// Filling-weighted TLS loss tangent `p·δ_TLS`.
    pub p_delta_tls: f64,
    /// Critical photon number.
    pub n_c: f64,
    pub beta: f64,
    /// Power-independent loss.
    pub delta_e: f64,
}

impl TlsParams {
    fn to_array(self) -> [f64; 4] {
        [self.p_delta_tls, self.n_c, self.beta, self.delta_e]
    }

    fn from_slice(v: &[f64]) -> Self {
        Self { p_delta_tls: v[0], n_c: v[1], beta: v[2], delta_e: v[3] }
    }
}

/// `tanh(hf / 2kT)`.
pub fn thermal_factor(f: f64, t: f64) -> f64 {
    (PLANCK * f / (2.0 * BOLTZMANN * t)).tanh()
}

/// `1/Qi` at mean photon number `n_avg`, frequency `f` (Hz) and temperature
/// `t` (K).
pub fn tls_loss_model(n_avg: f64, f: f64, t: f64, params: &TlsParams) -> f64 {
    let u = (n_avg / params.n_c).powf(params.beta);
    params.p_delta_tls * thermal_factor(f, t) / (1.0 + u).sqrt() + params.delta_e
}

/// One measured point of a power sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepPoint {
    pub n_avg: f64,
    pub qi: f64,
    pub qi_err: Option<f64>,
    /// Resonance frequency, Hz.
    pub f: f64,
    /// Temperature, K.
    pub t: f64,
}

impl PowerSweepPoint {
    pub fn new(n_avg: f64, qi: f64, f: f64) -> Self {
        Self { n_avg, qi, qi_err: None, f, t: DEFAULT_TEMPERATURE }
    }

    pub fn with_error(self, qi_err: f64) -> Self {
        Self { qi_err: Some(qi_err), ..self }
    }
}

/// Space in which the optimizer moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Parameterization {
    /// Logarithms of the four parameters; keeps them positive.
    #[default]
    Log,
    /// The parameters themselves, each scaled by its starting value.
    Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct TlsOptions {
    pub parameterization: Parameterization,
    pub lm: LmOptions,
    /// Fewer decades of photon number than this is an error.
    pub min_decades: f64,
    pub min_points: usize,
}

impl Default for TlsOptions {
    fn default() -> Self {
        Self { parameterization: Parameterization::Log, lm: LmOptions::default(), min_decades: 2.0, min_points: 6 }
    }
}

/// Fitted loss model with derived quality factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlsFit {
    pub p_delta_tls: f64,
    pub n_c: f64,
    pub beta: f64,
    pub delta_e: f64,
    /// Covariance of `(p·δ_TLS, n_c, β, δ_e)`.
    pub covariance: [[f64; 4]; 4],
    /// Standard errors of `(p·δ_TLS, n_c, β, δ_e)`.
    pub std_errors: [f64; 4],
    /// `1/(p·δ_TLS)`.
    pub qi0: f64,
    pub qi0_err: f64,
    /// `1/δ_e`.
    pub qi_high: f64,
    pub qi_high_err: f64,
    /// Weighted sum of squared residuals.
    pub chi2: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl TlsFit {
    pub fn params(&self) -> TlsParams {
        TlsParams { p_delta_tls: self.p_delta_tls, n_c: self.n_c, beta: self.beta, delta_e: self.delta_e }
    }

    /// `(n, Qi)` pairs of the fitted curve, for plotting.
    pub fn curve(&self, n_values: &[f64], f: f64, t: f64) -> Vec<(f64, f64)> {
        let p = self.params();
        n_values.iter().map(|n| (*n, 1.0 / tls_loss_model(*n, f, t, &p))).collect()
    }
}

fn gradient(n: f64, th: f64, p: &TlsParams) -> [f64; 4] {
    let ratio = n / p.n_c;
    let u = ratio.powf(p.beta);
    let s = (1.0 + u).sqrt();
    let core = p.p_delta_tls * th / (2.0 * s * s * s);
    let (d_nc, d_beta) = if n > 0.0 { (core * p.beta * u / p.n_c, -core * u * ratio.ln()) } else { (0.0, 0.0) };
    [th / s, d_nc, d_beta, 1.0]
}

/// `n` logarithmically spaced values from `lo` to `hi`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1).max(1) as f64).exp()).collect()
}

/// Synthetic sweep with multiplicative Gaussian noise of relative size
/// `noise` on Qi; `qi_err` is set to `noise · Qi`.
pub fn synthesize_sweep<R: Rng + ?Sized>(
    params: &TlsParams,
    n_values: &[f64],
    f: f64,
    t: f64,
    noise: f64,
    rng: &mut R,
) -> Result<Vec<PowerSweepPoint>> {
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(n_values
        .iter()
        .map(|n| {
            let qi = 1.0 / tls_loss_model(*n, f, t, params);
            let eps = if noise > 0.0 { normal.sample(rng) } else { 0.0 };
            let qi_err = if noise > 0.0 { Some(noise * qi) } else { None };
            PowerSweepPoint { n_avg: *n, qi: qi * (1.0 + eps), qi_err, f, t }
        })
        .collect())
}

fn initial_guess(points: &[PowerSweepPoint]) -> TlsParams {
    let mut sorted: Vec<&PowerSweepPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.n_avg.total_cmp(&b.n_avg));
    let n_min = sorted[0].n_avg;
    let n_max = sorted[sorted.len() - 1].n_avg;
    let decade_mean = |pred: &dyn Fn(f64) -> bool| {
        let sel: Vec<f64> = sorted.iter().filter(|p| pred(p.n_avg)).map(|p| 1.0 / p.qi).collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    let delta_e = decade_mean(&|n| n >= n_max / 10.0);
    let low = decade_mean(&|n| n <= n_min * 10.0);
    let th = thermal_factor(sorted[0].f, sorted[0].t);
    let p_delta = ((low - delta_e) / th).max(0.1 * delta_e);
    TlsParams { p_delta_tls: p_delta, n_c: (n_min * n_max).sqrt(), beta: 0.5, delta_e }
}

/// Weighted nonlinear least squares of the model to `1/Qi`.
pub fn fit_tls(points: &[PowerSweepPoint]) -> Result<TlsFit> {
    fit_tls_with(points, &TlsOptions::default())
}

pub fn fit_tls_with(points: &[PowerSweepPoint], opts: &TlsOptions) -> Result<TlsFit> {
    if points.len() < opts.min_points {
        return Err(Error::invalid(format!("{} sweep points, at least {} required", points.len(), opts.min_points)));
    }
    for p in points {
        if !(p.n_avg > 0.0 && p.qi > 0.0 && p.f > 0.0 && p.t > 0.0) {
            return Err(Error::invalid(format!("invalid sweep point {p:?}")));
        }
        if let Some(e) = p.qi_err {
            if !(e > 0.0) {
                return Err(Error::invalid(format!("non-positive Qi error in {p:?}")));
            }
        }
    }
    let n_min = points.iter().map(|p| p.n_avg).fold(f64::INFINITY, f64::min);
    let n_max = points.iter().map(|p| p.n_avg).fold(0.0, f64::max);
    let decades = (n_max / n_min).log10();
    if decades < opts.min_decades {
        return Err(Error::InsufficientRange(format!(
            "photon numbers span {decades:.2} decades, at least {} required",
            opts.min_decades
        )));
    }
    let mut warnings = Vec::new();
    if decades < 3.0 {
        warnings.push(format!("photon numbers span only {decades:.2} decades"));
    }

    let y: Vec<f64> = points.iter().map(|p| 1.0 / p.qi).collect();
    let sigma: Vec<f64> = if points.iter().all(|p| p.qi_err.is_some()) {
        points.iter().map(|p| p.qi_err.unwrap() / (p.qi * p.qi)).collect()
    } else {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        vec![mean; y.len()]
    };
    let thermal: Vec<f64> = points.iter().map(|p| thermal_factor(p.f, p.t)).collect();

    let init = initial_guess(points).to_array();
    let log = opts.parameterization == Parameterization::Log;
    let natural = |x: &[f64]| -> TlsParams {
        let v: Vec<f64> = x.iter().zip(&init).map(|(a, s)| if log { a.exp() } else { a * s }).collect();
        TlsParams::from_slice(&v)
    };
    // d(natural)/d(internal) per parameter
    let chain = |x: &[f64]| -> [f64; 4] {
        let p = natural(x).to_array();
        std::array::from_fn(|k| if log { p[k] } else { init[k] })
    };
    let residuals = |x: &[f64]| -> Vec<f64> {
        let p = natural(x);
        points
            .iter()
            .zip(&y)
            .zip(&sigma)
            .map(|((pt, yi), s)| (tls_loss_model(pt.n_avg, pt.f, pt.t, &p) - yi) / s)
            .collect()
    };
    let jacobian = |x: &[f64]| -> DMatrix<f64> {
        let p = natural(x);
        let c = chain(x);
        let mut j = DMatrix::zeros(points.len(), 4);
        for (r, pt) in points.iter().enumerate() {
            let g = gradient(pt.n_avg, thermal[r], &p);
            for k in 0..4 {
                j[(r, k)] = g[k] * c[k] / sigma[r];
            }
        }
        j
    };
    let x0: Vec<f64> = if log { init.iter().map(|v| v.ln()).collect() } else { vec![1.0; 4] };
    let report = levenberg_marquardt(residuals, jacobian, &x0, &opts.lm)?;
    let p = natural(&report.params);
    if p.to_array().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Unphysical(format!("non-positive TLS parameters {p:?}")));
    }
    if !(0.1..=1.0).contains(&p.beta) {
        warnings.push(format!("beta = {:.3} outside the usual range (0.1, 1]", p.beta));
    }

    // weights carry the data errors when given; otherwise scale by the fit
    let cov_internal = if points.iter().all(|pt| pt.qi_err.is_some()) {
        report.unscaled_covariance()?
    } else {
        report.covariance()?
    };
    let c = chain(&report.params);
    let mut covariance = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            covariance[a][b] = c[a] * c[b] * cov_internal[(a, b)];
        }
    }
    let std_errors: [f64; 4] = std::array::from_fn(|k| covariance[k][k].max(0.0).sqrt());
    Ok(TlsFit {
        p_delta_tls: p.p_delta_tls,
        n_c: p.n_c,
        beta: p.beta,
        delta_e: p.delta_e,
        covariance,
        std_errors,
        qi0: 1.0 / p.p_delta_tls,
        qi0_err: std_errors[0] / (p.p_delta_tls * p.p_delta_tls),
        qi_high: 1.0 / p.delta_e,
        qi_high_err: std_errors[3] / (p.delta_e * p.delta_e),
        chi2: report.rss,
        iterations: report.iterations,
        warnings,
    })
}
