//! Loss fluctuation statistics: log-normal fits, level-jump detection and
//! power-law regression.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal};
use std::f64::consts::PI;

use crate::{Error, Result};

/// Window of the running medians in [`detect_jumps`].
pub const JUMP_WINDOW: usize = 21;

/// Loss tangent (`1/Qi`) of repeated fits against time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTimeSeries {
    /// Seconds.
    pub timestamps: Vec<f64>,
    pub loss_tangent: Vec<f64>,
}

impl LossTimeSeries {
    pub fn new(timestamps: Vec<f64>, loss_tangent: Vec<f64>) -> Result<Self> {
        if timestamps.len() != loss_tangent.len() {
            return Err(Error::invalid("timestamps and loss values differ in length"));
        }
        if loss_tangent.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("loss tangent must be positive and finite"));
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("non-finite timestamp"));
        }
        Ok(Self { timestamps, loss_tangent })
    }

    /// Evenly spaced series with unit time step.
    pub fn from_values(loss_tangent: Vec<f64>) -> Result<Self> {
        Self::new((0..loss_tangent.len()).map(|k| k as f64).collect(), loss_tangent)
    }

    pub fn len(&self) -> usize {
        self.loss_tangent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss_tangent.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    /// Median `exp(mean ln x)`.
    pub x0: f64,
    /// Standard deviation of `ln x`.
    pub sigma: f64,
    /// Kolmogorov-Smirnov distance between the samples and the fitted CDF.
    pub ks_statistic: f64,
    pub n: usize,
}

impl LogNormalFit {
    pub fn pdf(&self, x: f64) -> f64 {
        lognormal_pdf(x, self.x0, self.sigma)
    }
}

/// `exp(-(ln(x/x0))² / 2σ²) / (x σ √(2π))`.
pub fn lognormal_pdf(x: f64, x0: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z = (x / x0).ln();
    (-z * z / (2.0 * sigma * sigma)).exp() / (x * sigma * (2.0 * PI).sqrt())
}

/// Maximum-likelihood log-normal fit.
pub fn fit_lognormal(samples: &[f64]) -> Result<LogNormalFit> {
    if samples.len() < 30 {
        return Err(Error::invalid(format!("{} samples, at least 30 required", samples.len())));
    }
    if samples.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::domain("log-normal fit needs positive samples"));
    }
    let n = samples.len() as f64;
    let logs: Vec<f64> = samples.iter().map(|v| v.ln()).collect();
    let l0 = logs[0];
    let mu = l0 + logs.iter().map(|l| l - l0).sum::<f64>() / n;
    let sigma = (logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n).sqrt();
    let ks_statistic = if sigma > 1e-300 {
        let dist = LogNormal::new(mu, sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let c = dist.cdf(*x);
                (c - i as f64 / n).max((i + 1) as f64 / n - c)
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(LogNormalFit { x0: mu.exp(), sigma, ks_statistic, n: samples.len() })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn running_median(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(values.len());
            median(&mut values[lo..hi].to_vec())
        })
        .collect()
}

/// Sum of absolute deviations from the median.
fn l1_cost(values: &[f64]) -> f64 {
    let m = median(&mut values.to_vec());
    values.iter().map(|v| (v - m).abs()).sum()
}

/// Indices where the loss level jumps.
///
/// Works on `ln(loss)`. At every index the medians of the
/// [`JUMP_WINDOW`] points before and after are compared; a jump is flagged
/// where they differ by more than `threshold` times the noise scale
/// (`1.4826 ×` the median absolute deviation from a running median). Each
/// run of flagged indices yields one change point, placed at the split of
/// least absolute deviation. The result is the index of the first sample of
/// each new level.
pub fn detect_jumps(series: &LossTimeSeries, threshold: f64) -> Result<Vec<usize>> {
    let w = JUMP_WINDOW;
    if series.len() < 50 {
        return Err(Error::invalid(format!("{} points, at least 50 required", series.len())));
    }
    if !(threshold > 0.0) {
        return Err(Error::invalid("jump threshold must be positive"));
    }
    let y: Vec<f64> = series.loss_tangent.iter().map(|v| v.ln()).collect();
    let trend = running_median(&y, w);
    let mut dev: Vec<f64> = y.iter().zip(&trend).map(|(a, b)| (a - b).abs()).collect();
    let scale = 1.4826 * median(&mut dev);
    let limit = threshold * scale;

    let n = y.len();
    let flagged: Vec<bool> = (0..n)
        .map(|k| {
            if k < w || k + w > n {
                return false;
            }
            let left = median(&mut y[k - w..k].to_vec());
            let right = median(&mut y[k..k + w].to_vec());
            (right - left).abs() > limit
        })
        .collect();

    let mut jumps = Vec::new();
    let mut k = 0;
    while k < n {
        if !flagged[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && flagged[k] {
            k += 1;
        }
        let end = k;
        let lo = start.saturating_sub(w);
        let hi = (end + w).min(n);
        let best = (start..end)
            .map(|s| (s, l1_cost(&y[lo..s]) + l1_cost(&y[s..hi])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(s, _)| s)
            .unwrap();
        jumps.push(best);
    }
    Ok(jumps)
}

/// Straight-line fit of `ln y` against `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
    pub r_squared: f64,
    pub n: usize,
}

fn check_pairs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("x and y differ in length"));
    }
    if x.len() < 3 {
        return Err(Error::invalid("regression needs at least 3 points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::domain("log-log regression needs positive values"));
    }
    Ok(())
}

/// Weighted least squares of `v` on `u`; `weights = None` is ordinary least
/// squares with errors from the residual variance, otherwise the weights
/// are inverse variances and the errors are absolute.
fn line_fit(u: &[f64], v: &[f64], weights: Option<&[f64]>) -> Result<LogLogFit> {
    let n = u.len();
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let um = u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let vm = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let suu: f64 = u.iter().zip(&w).map(|(a, b)| b * (a - um).powi(2)).sum();
    if !(suu > 1e-300 * sw) {
        return Err(Error::domain("all x values are equal"));
    }
    let suv: f64 = u.iter().zip(v).zip(&w).map(|((a, c), b)| b * (a - um) * (c - vm)).sum();
    let slope = suv / suu;
    let intercept = vm - slope * um;
    let ss_res: f64 = u.iter().zip(v).zip(&w).map(|((a, c), b)| b * (c - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = v.iter().zip(&w).map(|(c, b)| b * (c - vm).powi(2)).sum();
    let s2 = if weights.is_some() { 1.0 } else { ss_res / (n - 2) as f64 };
    Ok(LogLogFit {
        slope,
        intercept,
        slope_err: (s2 / suu).sqrt(),
        intercept_err: (s2 * (1.0 / sw + um * um / suu)).sqrt(),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        n,
    })
}

/// Ordinary least squares of `ln y` on `ln x`; the slope error comes from
/// the residual variance.
pub fn loglog_regression(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    check_pairs(x, y)?;
    let u: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let v: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    line_fit(&u, &v, None)
}

/// Weighted variant: `y_err` are standard errors of `y`, propagated to
/// `ln y` as `y_err / y`.
pub fn weighted_loglog_regression(x: &[f64], y: &[f64], y_err: &[f64]) -> Result<LogLogFit> {
    check_pairs(x, y)?;
    if y_err.len() != y.len() || y_err.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("one positive error per y value required"));
    }
    let u: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let v: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let w: Vec<f64> = y.iter().zip(y_err).map(|(a, e)| (a / e).powi(2)).collect();
    line_fit(&u, &v, Some(&w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Histogram with `bins` bins between the sample extremes, logarithmically
/// spaced when `log` is set.
pub fn histogram(samples: &[f64], bins: usize, log: bool) -> Result<Histogram> {
    if samples.is_empty() || bins == 0 {
        return Err(Error::invalid("histogram needs samples and at least one bin"));
    }
    if log && samples.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("log histogram needs positive samples"));
    }
    let map = |v: f64| if log { v.ln() } else { v };
    let lo = samples.iter().map(|v| map(*v)).fold(f64::INFINITY, f64::min);
    let mut hi = samples.iter().map(|v| map(*v)).fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for v in samples {
        let k = (((map(*v) - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let edges = (0..=bins)
        .map(|k| {
            let e = lo + width * k as f64;
            if log {
                e.exp()
            } else {
                e
            }
        })
        .collect();
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_fit_exactly() {
        let fit = fit_lognormal(&[9.11e-8; 40]).unwrap();
        assert!((fit.x0 / 9.11e-8 - 1.0).abs() < 1e-12);
        assert!(fit.sigma < 1e-7);
    }

    #[test]
    fn lognormal_rejects_bad_input() {
        assert!(fit_lognormal(&[1.0; 10]).is_err());
        let mut v = vec![1.0; 40];
        v[3] = 0.0;
        assert!(matches!(fit_lognormal(&v), Err(Error::Domain(_))));
    }

    #[test]
    fn pdf_integrates_to_one() {
        let (x0, s): (f64, f64) = (2.0, 0.42);
        let n = 200_000;
        let (a, b) = ((x0.ln() - 10.0 * s), (x0.ln() + 10.0 * s));
        let h = (b - a) / n as f64;
        let integral: f64 = (0..n)
            .map(|k| {
                let x = (a + (k as f64 + 0.5) * h).exp();
                lognormal_pdf(x, x0, s) * x * h
            })
            .sum();
        assert!((integral - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_power_law() {
        let x = [1.0, 2.0, 3.0, 5.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let fit = loglog_regression(&x, &y).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.slope_err < 1e-7);
        assert!(loglog_regression(&[2.0; 4], &[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn constant_series_has_no_jumps() {
        let s = LossTimeSeries::from_values(vec![1e-7; 200]).unwrap();
        assert!(detect_jumps(&s, 6.0).unwrap().is_empty());
    }

    #[test]
    fn clean_step_is_located() {
        let v: Vec<f64> = (0..300).map(|k| if k < 137 { 1e-7 } else { 3e-7 }).collect();
        let s = LossTimeSeries::from_values(v).unwrap();
        assert_eq!(detect_jumps(&s, 6.0).unwrap(), vec![137]);
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (1..=100).map(|k| k as f64).collect();
        let h = histogram(&v, 7, true).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
        assert_eq!(h.edges.len(), 8);
    }
}
