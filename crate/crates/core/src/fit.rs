//! Notch-port resonance fitting.
//!
//! The model of a resonator side-coupled to a feedline is
//!
//! ```text
//! S21(f) = a e^{iα} e^{-2πifτ} [1 - (Ql/|Qc|) e^{iφ} / (1 + 2i Ql (f/f0 - 1))]
//! ```
//!
//! [`fit_resonance`] removes the cable delay, fits a circle to the resonance,
//! reads starting values off the circle and a phase-vs-frequency fit, and
//! finishes with a Levenberg-Marquardt fit of all seven parameters to the
//! real and imaginary parts jointly.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::optim::{levenberg_marquardt, minimize_scalar, LmOptions};
use crate::{Error, Result};

/// Smallest number of samples accepted by the fitting routines.
pub const MIN_TRACE_POINTS: usize = 32;

/// Complex transmission samples, sorted by increasing frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S21Trace {
    pub freqs: Vec<f64>,
    pub s21: Vec<Complex64>,
    /// Instrument output power, dBm.
    pub power_dbm: Option<f64>,
    pub label: String,
    pub timestamp: Option<String>,
}

impl S21Trace {
    /// Validates the samples and sorts them by frequency, so descending
    /// sweeps are accepted.
    pub fn new(freqs: Vec<f64>, s21: Vec<Complex64>) -> Result<Self> {
        if freqs.len() != s21.len() {
            return Err(Error::invalid(format!("{} frequencies but {} S21 samples", freqs.len(), s21.len())));
        }
        if freqs.is_empty() {
            return Err(Error::invalid("empty trace"));
        }
        if freqs.iter().any(|f| !f.is_finite()) || s21.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("trace contains NaN or infinite values"));
        }
        let mut pairs: Vec<(f64, Complex64)> = freqs.into_iter().zip(s21).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("duplicate frequencies in trace"));
        }
        let (freqs, s21) = pairs.into_iter().unzip();
        Ok(Self { freqs, s21, power_dbm: None, label: String::new(), timestamp: None })
    }

    pub fn with_power(mut self, power_dbm: f64) -> Self {
        self.power_dbm = Some(power_dbm);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.freqs[self.len() - 1] - self.freqs[0]
    }

    /// `|S21|` in dB.
    pub fn magnitude_db(&self) -> Vec<f64> {
        self.s21.iter().map(|z| 20.0 * z.norm().log10()).collect()
    }

    fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Self {
        Self { s21: self.freqs.iter().zip(&self.s21).map(|(fr, z)| f(*fr, *z)).collect(), ..self.clone() }
    }

    fn require_fit_size(&self) -> Result<()> {
        if self.len() < MIN_TRACE_POINTS {
            return Err(Error::invalid(format!(
                "trace has {} points, at least {MIN_TRACE_POINTS} required",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Parameters of the notch model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotchParams {
    /// Resonance frequency, Hz.
    pub f0: f64,
    pub ql: f64,
    pub qc_mag: f64,
    /// Impedance-mismatch rotation, rad.
    pub phi: f64,
    /// Cable delay, s.
    pub delay: f64,
    pub amplitude: f64,
    pub alpha: f64,
}

impl NotchParams {
    /// Parameters from the intrinsic rather than loaded quality factor.
    pub fn from_qi(f0: f64, qi: f64, qc_mag: f64, phi: f64) -> Self {
        let ql = 1.0 / (1.0 / qi + phi.cos() / qc_mag);
        Self { f0, ql, qc_mag, phi, delay: 0.0, amplitude: 1.0, alpha: 0.0 }
    }

    pub fn with_environment(self, delay: f64, amplitude: f64, alpha: f64) -> Self {
        Self { delay, amplitude, alpha, ..self }
    }

    /// `1/Qi = 1/Ql - cos(φ)/|Qc|`.
    pub fn qi(&self) -> f64 {
        1.0 / (1.0 / self.ql - self.phi.cos() / self.qc_mag)
    }

    /// Circle diameter `Ql/|Qc|` in units of the off-resonant amplitude.
    pub fn diameter(&self) -> f64 {
        self.ql / self.qc_mag
    }

    pub fn s21(&self, f: f64) -> Complex64 {
        let env = Complex64::from_polar(self.amplitude, self.alpha - TAU * f * self.delay);
        env * self.resonator(f)
    }

    /// The bracketed resonator factor, without the environment.
    pub fn resonator(&self, f: f64) -> Complex64 {
        let x = f / self.f0 - 1.0;
        let denom = Complex64::new(1.0, 2.0 * self.ql * x);
        Complex64::ONE - Complex64::from_polar(self.diameter(), self.phi) / denom
    }

    /// Full width at half maximum of the dip, Hz.
    pub fn linewidth(&self) -> f64 {
        self.f0 / self.ql
    }
}

/// `n` evenly spaced frequencies spanning `±half_widths` linewidths around
/// the resonance.
pub fn sweep_around(f0: f64, ql: f64, half_widths: f64, n: usize) -> Vec<f64> {
    let span = 2.0 * half_widths * f0 / ql;
    let start = f0 - 0.5 * span;
    (0..n).map(|k| start + span * k as f64 / (n - 1).max(1) as f64).collect()
}

/// Sample the model on `freqs` with complex Gaussian noise. `snr_db` is the
/// off-resonant amplitude over the RMS noise magnitude; `None` is noiseless.
pub fn synthesize_trace<R: Rng + ?Sized>(
    params: &NotchParams,
    freqs: &[f64],
    snr_db: Option<f64>,
    rng: &mut R,
) -> Result<S21Trace> {
    let s21: Vec<Complex64> = match snr_db {
        None => freqs.iter().map(|f| params.s21(*f)).collect(),
        Some(snr) => {
            let sigma = params.amplitude * 10f64.powf(-snr / 20.0) / 2f64.sqrt();
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
            freqs.iter().map(|f| params.s21(*f) + Complex64::new(normal.sample(rng), normal.sample(rng))).collect()
        }
    };
    S21Trace::new(freqs.to_vec(), s21)
}

/// Algebraic circle fit result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
    /// RMS of `|z - center| - radius` over the fitted points.
    pub rms_residual: f64,
}

/// Pratt's algebraic circle fit (gradient-weighted, unbiased in the
/// radius), solved by Newton iteration on the characteristic polynomial
/// starting from zero. Three points give the circumscribed circle.
pub fn fit_circle(points: &[Complex64]) -> Result<Circle> {
    let n = points.len();
    if n < 3 {
        return Err(Error::invalid("circle fit needs at least 3 points"));
    }
    let mean = points.iter().sum::<Complex64>() / n as f64;
    let (mut mxx, mut myy, mut mxy, mut mxz, mut myz, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (x, y) = (p.re - mean.re, p.im - mean.im);
        let z = x * x + y * y;
        mxx += x * x;
        myy += y * y;
        mxy += x * y;
        mxz += x * z;
        myz += y * z;
        mzz += z * z;
    }
    let nf = n as f64;
    let (mxx, myy, mxy, mxz, myz, mzz) = (mxx / nf, myy / nf, mxy / nf, mxz / nf, myz / nf, mzz / nf);
    let mz = mxx + myy;
    if !(mz > 0.0) {
        return Err(Error::invalid("circle fit on coincident points"));
    }
    let cov_xy = mxx * myy - mxy * mxy;
    let a2 = 4.0 * cov_xy - 3.0 * mz * mz - mzz;
    let a1 = mzz * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz - mz * mz * mz;
    let a0 = mxz * mxz * myy + myz * myz * mxx - mzz * cov_xy - 2.0 * mxz * myz * mxy + mz * mz * cov_xy;

    let mut eta = 0.0;
    let mut y_old = f64::INFINITY;
    for _ in 0..100 {
        let y = a0 + eta * (a1 + eta * (a2 + 4.0 * eta * eta));
        if y.abs() > y_old.abs() {
            eta = 0.0;
            break;
        }
        y_old = y;
        let dy = a1 + eta * (2.0 * a2 + 16.0 * eta * eta);
        if dy == 0.0 {
            break;
        }
        let next = eta - y / dy;
        if !next.is_finite() || next < 0.0 {
            eta = 0.0;
            break;
        }
        let done = (next - eta).abs() <= 1e-14 * next.abs().max(1e-300);
        eta = next;
        if done {
            break;
        }
    }
    let det = eta * eta - eta * mz + cov_xy;
    if det.abs() <= 1e-12 * mz * mz {
        return Err(Error::invalid("points are collinear; no circle"));
    }
    let cx = (mxz * (myy - eta) - myz * mxy) / det / 2.0;
    let cy = (myz * (mxx - eta) - mxz * mxy) / det / 2.0;
    let radius = (cx * cx + cy * cy + mz + 2.0 * eta).sqrt();
    let center = Complex64::new(cx, cy) + mean;
    let rms = (points.iter().map(|p| ((p - center).norm() - radius).powi(2)).sum::<f64>() / nf).sqrt();
    Ok(Circle { center, radius, rms_residual: rms })
}

/// Controls for the fitting pipeline.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub lm: LmOptions,
    /// Fraction of the span on each side treated as off-resonant baseline.
    pub baseline_fraction: f64,
    /// Minimum ratio of the largest baseline deviation to the baseline
    /// noise for a resonance to count as present.
    pub detection_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { lm: LmOptions::default(), baseline_fraction: 0.1, detection_threshold: 8.0 }
    }
}

fn baseline_windows(n: usize, fraction: f64) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>)> {
    let k = (fraction * n as f64).floor() as usize;
    if k < 3 || 2 * k >= n {
        return Err(Error::invalid(format!("baseline windows of {k} points out of {n} are too small")));
    }
    Ok((0..k, n - k..n))
}

fn unwrap(phases: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for p in phases {
        match out.last() {
            None => out.push(p),
            Some(prev) => {
                let d = (p - prev + PI).rem_euclid(TAU) - PI;
                out.push(prev + d);
            }
        }
    }
    out
}

/// Delay from the phase slope of the two baseline windows, each unwrapped
/// separately and given its own offset.
fn baseline_delay(trace: &S21Trace, fraction: f64) -> Result<f64> {
    let (lo, hi) = baseline_windows(trace.len(), fraction)?;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for range in [lo, hi] {
        let f = &trace.freqs[range.clone()];
        let ph = unwrap(trace.s21[range].iter().map(|z| z.arg()));
        let fm = f.iter().sum::<f64>() / f.len() as f64;
        let pm = ph.iter().sum::<f64>() / ph.len() as f64;
        for (x, y) in f.iter().zip(&ph) {
            sxx += (x - fm) * (x - fm);
            sxy += (x - fm) * (y - pm);
        }
    }
    Ok(-sxy / sxx / TAU)
}

fn apply_delay(trace: &S21Trace, tau: f64) -> S21Trace {
    trace.map(|f, z| z * Complex64::from_polar(1.0, TAU * f * tau))
}

/// Check that the trace departs from its off-resonant baseline by more than
/// the baseline noise allows.
fn detect_resonance(trace: &S21Trace, opts: &FitOptions) -> Result<()> {
    let (lo, hi) = baseline_windows(trace.len(), opts.baseline_fraction)?;
    let mut noise = 0.0;
    let mut count = 0;
    let mut anchors = Vec::new();
    for range in [lo, hi] {
        let f = &trace.freqs[range.clone()];
        let z = &trace.s21[range];
        let fm = f.iter().sum::<f64>() / f.len() as f64;
        let zm = z.iter().sum::<Complex64>() / z.len() as f64;
        let sxx: f64 = f.iter().map(|x| (x - fm).powi(2)).sum();
        let slope = f.iter().zip(z).map(|(x, v)| (v - zm) * (x - fm)).sum::<Complex64>() / sxx;
        for (x, v) in f.iter().zip(z) {
            noise += (v - zm - slope * (x - fm)).norm_sqr();
            count += 1;
        }
        anchors.push((fm, zm));
    }
    let noise = (noise / count as f64).sqrt();
    let ((f1, z1), (f2, z2)) = (anchors[0], anchors[1]);
    let deviation = trace
        .freqs
        .iter()
        .zip(&trace.s21)
        .map(|(f, z)| (z - (z1 + (z2 - z1) * ((f - f1) / (f2 - f1)))).norm())
        .fold(0.0, f64::max);
    let scale = z1.norm().max(z2.norm());
    if !(deviation > opts.detection_threshold * noise && deviation > 1e-9 * scale) {
        return Err(Error::NoResonance(format!(
            "largest departure from baseline {deviation:.3e} vs noise {noise:.3e}"
        )));
    }
    Ok(())
}

/// Remove the cable delay: returns the trace multiplied by `e^{+2πifτ}` and
/// `τ` in seconds.
///
/// `τ` is first estimated from the baseline phase slope, then refined by
/// minimizing the residual of a circle fit to the corrected trace.
pub fn remove_delay(trace: &S21Trace) -> Result<(S21Trace, f64)> {
    remove_delay_with(trace, &FitOptions::default())
}

pub fn remove_delay_with(trace: &S21Trace, opts: &FitOptions) -> Result<(S21Trace, f64)> {
    trace.require_fit_size()?;
    let coarse = baseline_delay(trace, opts.baseline_fraction)?;
    let corrected = apply_delay(trace, coarse);
    detect_resonance(&corrected, opts)?;
    let width = 0.05 / trace.span();
    let cost = |tau: f64| {
        let pts: Vec<Complex64> =
            trace.freqs.iter().zip(&trace.s21).map(|(f, z)| z * Complex64::from_polar(1.0, TAU * f * tau)).collect();
        match fit_circle(&pts) {
            Ok(c) => c.rms_residual / c.radius,
            Err(_) => f64::INFINITY,
        }
    };
    let (tau, _) = minimize_scalar(cost, coarse - width, coarse + width, 1e-6 * width);
    Ok((apply_delay(trace, tau), tau))
}

/// Standard errors of the fitted quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitUncertainties {
    pub f0: f64,
    pub ql: f64,
    pub qc_mag: f64,
    pub phi: f64,
    pub qi: f64,
    pub delay_ns: f64,
    pub amplitude: f64,
    pub alpha: f64,
}

/// Result of [`fit_resonance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFit {
    pub f0: f64,
    pub ql: f64,
    pub qc_mag: f64,
    pub phi: f64,
    pub qi: f64,
    pub delay_ns: f64,
    pub amplitude: f64,
    pub alpha: f64,
    pub uncertainties: FitUncertainties,
    /// RMS complex residual relative to the amplitude.
    pub rms_residual: f64,
    pub iterations: usize,
    pub power_dbm: Option<f64>,
    pub label: String,
}

impl ResonanceFit {
    pub fn params(&self) -> NotchParams {
        NotchParams {
            f0: self.f0,
            ql: self.ql,
            qc_mag: self.qc_mag,
            phi: self.phi,
            delay: self.delay_ns * 1e-9,
            amplitude: self.amplitude,
            alpha: self.alpha,
        }
    }

    /// `1/Qc = e^{iφ}/|Qc|`.
    pub fn inverse_qc(&self) -> Complex64 {
        Complex64::from_polar(1.0 / self.qc_mag, self.phi)
    }

    pub fn diameter(&self) -> f64 {
        self.ql / self.qc_mag
    }
}

/// Starting values read off the delay-corrected trace.
fn initial_guess(trace: &S21Trace, tau: f64, opts: &FitOptions) -> Result<NotchParams> {
    let circle = fit_circle(&trace.s21)?;
    let (lo, hi) = baseline_windows(trace.len(), opts.baseline_fraction)?;
    let base: Complex64 =
        trace.s21[lo.clone()].iter().chain(&trace.s21[hi.clone()]).sum::<Complex64>() / (lo.len() + hi.len()) as f64;

    let dist: Vec<f64> = trace.s21.iter().map(|z| (z - base).norm_sqr()).collect();
    let k_res = (0..dist.len()).max_by(|a, b| dist[*a].total_cmp(&dist[*b])).unwrap();
    let f_res = trace.freqs[k_res];
    let half = 0.5 * dist[k_res];
    let mut left = k_res;
    while left > 0 && dist[left] > half {
        left -= 1;
    }
    let mut right = k_res;
    while right + 1 < dist.len() && dist[right] > half {
        right += 1;
    }
    let fwhm = (trace.freqs[right] - trace.freqs[left]).max(trace.span() / trace.len() as f64);
    let ql0 = f_res / fwhm;

    // θ(f) = θ0 + 2 atan(2 Ql (1 - f/f0)) around the circle center
    let theta = unwrap(trace.s21.iter().map(|z| (z - circle.center).arg()));
    let theta0 = theta[k_res];
    let scale_f = f_res / ql0;
    let freqs = &trace.freqs;
    let model = |p: &[f64], f: f64| {
        let f0 = f_res + p[1] * scale_f;
        let ql = p[2].exp();
        p[0] + 2.0 * (2.0 * ql * (1.0 - f / f0)).atan()
    };
    let res = |p: &[f64]| -> Vec<f64> { freqs.iter().zip(&theta).map(|(f, t)| model(p, *f) - t).collect() };
    let jac = |p: &[f64]| -> DMatrix<f64> {
        let f0 = f_res + p[1] * scale_f;
        let ql = p[2].exp();
        DMatrix::from_fn(freqs.len(), 3, |r, c| {
            let f = freqs[r];
            let u = 2.0 * ql * (1.0 - f / f0);
            let g = 2.0 / (1.0 + u * u);
            match c {
                0 => 1.0,
                1 => g * 2.0 * ql * f / (f0 * f0) * scale_f,
                _ => g * u,
            }
        })
    };
    let phase = levenberg_marquardt(res, jac, &[theta0, 0.0, ql0.ln()], &opts.lm);
    let (theta0, f0, ql) = match phase {
        Ok(rep) => (rep.params[0], f_res + rep.params[1] * scale_f, rep.params[2].exp()),
        Err(_) => (theta0, f_res, ql0),
    };
    if !(ql.is_finite() && ql > 0.0 && f0 > 0.0) {
        return Err(Error::NoResonance("phase fit found no resonance".into()));
    }

    let off = circle.center + Complex64::from_polar(circle.radius, theta0 + PI);
    let centered = circle.center / off;
    let dphi = 2.0 * (Complex64::ONE - centered);
    let diameter = dphi.norm();
    Ok(NotchParams {
        f0,
        ql,
        qc_mag: ql / diameter.max(1e-12),
        phi: dphi.arg(),
        delay: tau,
        amplitude: off.norm(),
        alpha: off.arg(),
    })
}

/// Fit the notch model to a trace with default options.
pub fn fit_resonance(trace: &S21Trace) -> Result<ResonanceFit> {
    fit_resonance_with(trace, &FitOptions::default())
}

pub fn fit_resonance_with(trace: &S21Trace, opts: &FitOptions) -> Result<ResonanceFit> {
    let (corrected, tau) = remove_delay_with(trace, opts)?;
    let init = initial_guess(&corrected, tau, opts)?;

    // internal parameters: f0 offset in linewidths, ln Ql, ln |Qc|, φ,
    // delay in units of 1/(2π span), ln a, and the phase at the sweep center
    let f_c = 0.5 * (trace.freqs[0] + trace.freqs[trace.len() - 1]);
    let s_f = init.f0 / init.ql;
    let s_tau = 1.0 / (TAU * trace.span());
    let to_params = |p: &[f64]| NotchParams {
        f0: init.f0 + p[0] * s_f,
        ql: p[1].exp(),
        qc_mag: p[2].exp(),
        phi: p[3],
        delay: p[4] * s_tau,
        amplitude: p[5].exp(),
        alpha: p[6] + TAU * f_c * p[4] * s_tau,
    };
    let freqs = &trace.freqs;
    let data = &trace.s21;
    let n = freqs.len();
    let env = |p: &[f64], f: f64| Complex64::from_polar(p[5].exp(), p[6] - TAU * (f - f_c) * p[4] * s_tau);
    let res = |p: &[f64]| -> Vec<f64> {
        let np = to_params(p);
        let mut out = vec![0.0; 2 * n];
        for (k, (f, z)) in freqs.iter().zip(data).enumerate() {
            let d = env(p, *f) * np.resonator(*f) - z;
            out[k] = d.re;
            out[n + k] = d.im;
        }
        out
    };
    let jac = |p: &[f64]| -> DMatrix<f64> {
        let np = to_params(p);
        let mut j = DMatrix::zeros(2 * n, 7);
        let rot = Complex64::from_polar(1.0, np.phi);
        for (k, f) in freqs.iter().enumerate() {
            let e = env(p, *f);
            let x = f / np.f0 - 1.0;
            let d = Complex64::new(1.0, 2.0 * np.ql * x);
            let m = np.resonator(*f);
            let s = e * m;
            let q = np.ql / np.qc_mag;
            let cols = [
                -e * q * rot * Complex64::new(0.0, 2.0 * np.ql * f / (np.f0 * np.f0)) / (d * d) * s_f,
                -e * rot * q / (d * d),
                e * q * rot / d,
                -e * q * Complex64::i() * rot / d,
                s * Complex64::new(0.0, -TAU * (f - f_c)) * s_tau,
                s,
                s * Complex64::i(),
            ];
            for (c, v) in cols.iter().enumerate() {
                j[(k, c)] = v.re;
                j[(n + k, c)] = v.im;
            }
        }
        j
    };
    let x0 = [
        0.0,
        init.ql.ln(),
        init.qc_mag.ln(),
        init.phi,
        init.delay / s_tau,
        init.amplitude.ln(),
        init.alpha - TAU * f_c * init.delay,
    ];
    let report = levenberg_marquardt(res, jac, &x0, &opts.lm)?;
    let p = &report.params;
    let mut fit = to_params(p);
    fit.phi = (fit.phi + PI).rem_euclid(TAU) - PI;
    fit.alpha = (fit.alpha + PI).rem_euclid(TAU) - PI;
    let qi = fit.qi();
    if !(qi.is_finite() && qi > 0.0) {
        return Err(Error::Unphysical(format!("1/Qi = 1/Ql - cos(φ)/|Qc| = {:.3e} is not positive", 1.0 / qi)));
    }

    let cov = report.covariance()?;
    let var = |a: usize| cov[(a, a)].max(0.0);
    let ql_qc_phi = [1usize, 2, 3];
    // Qi = 1/(1/Ql - cos φ/Qc) against (ln Ql, ln Qc, φ)
    let grad = [qi * qi / fit.ql, -qi * qi * fit.phi.cos() / fit.qc_mag, -qi * qi * fit.phi.sin() / fit.qc_mag];
    let mut var_qi = 0.0;
    for (a, ga) in ql_qc_phi.iter().zip(&grad) {
        for (b, gb) in ql_qc_phi.iter().zip(&grad) {
            var_qi += ga * gb * cov[(*a, *b)];
        }
    }
    let g_alpha = TAU * f_c * s_tau;
    let var_alpha = var(6) + g_alpha * g_alpha * var(4) + 2.0 * g_alpha * cov[(4, 6)];
    let uncertainties = FitUncertainties {
        f0: s_f * var(0).sqrt(),
        ql: fit.ql * var(1).sqrt(),
        qc_mag: fit.qc_mag * var(2).sqrt(),
        phi: var(3).sqrt(),
        qi: var_qi.max(0.0).sqrt(),
        delay_ns: s_tau * var(4).sqrt() * 1e9,
        amplitude: fit.amplitude * var(5).sqrt(),
        alpha: var_alpha.max(0.0).sqrt(),
    };
    Ok(ResonanceFit {
        f0: fit.f0,
        ql: fit.ql,
        qc_mag: fit.qc_mag,
        phi: fit.phi,
        qi,
        delay_ns: fit.delay * 1e9,
        amplitude: fit.amplitude,
        alpha: fit.alpha,
        uncertainties,
        rms_residual: (report.rss / n as f64).sqrt() / fit.amplitude,
        iterations: report.iterations,
        power_dbm: trace.power_dbm,
        label: trace.label.clone(),
    })
}

/// `n / Σ 1/x`.
pub fn harmonic_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("harmonic mean of no values"));
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("harmonic mean needs positive values"));
    }
    Ok(values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>())
}

/// Harmonic mean of the intrinsic quality factors of repeated fits.
pub fn harmonic_mean_qi(fits: &[ResonanceFit]) -> Result<f64> {
    harmonic_mean(&fits.iter().map(|f| f.qi).collect::<Vec<_>>())
}
