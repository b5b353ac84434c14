//! Input-line attenuation and photon number.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::PLANCK;
use crate::fit::S21Trace;
use crate::{Error, Result};

/// Default moving-median window for component extraction.
pub const DEFAULT_MEDIAN_WINDOW: usize = 11;

/// Attenuation of one element of the input line, tabulated in dB
/// (negative is loss) against frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationComponent {
    pub name: String,
    #[serde(rename = "freqs_hz")]
    pub freqs: Vec<f64>,
    pub atten_db: Vec<f64>,
}

impl AttenuationComponent {
    pub fn new(name: impl Into<String>, freqs: Vec<f64>, atten_db: Vec<f64>) -> Result<Self> {
        let c = Self { name: name.into(), freqs, atten_db };
        c.validate()?;
        Ok(c)
    }

    /// Frequency-independent attenuation on `[lo, hi]`.
    pub fn flat(name: impl Into<String>, atten_db: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(name, vec![lo, hi], vec![atten_db, atten_db])
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs.len() != self.atten_db.len() || self.freqs.is_empty() {
            return Err(Error::invalid(format!(
                "component {:?}: {} frequencies, {} values",
                self.name,
                self.freqs.len(),
                self.atten_db.len()
            )));
        }
        if self.freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!("component {:?}: frequencies must be strictly increasing", self.name)));
        }
        if self.freqs.iter().chain(&self.atten_db).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("component {:?}: non-finite value", self.name)));
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.freqs[0], self.freqs[self.freqs.len() - 1])
    }

    /// Linearly interpolated attenuation at `f`.
    pub fn at(&self, f: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(f >= lo && f <= hi) {
            return Err(Error::OutOfRange { freq_hz: f, lo_hz: lo, hi_hz: hi });
        }
        Ok(interpolate(&self.freqs, &self.atten_db, f))
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|v| *v <= x);
    if k == 0 {
        return ys[0];
    }
    if k == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x == x0 {
        return ys[k - 1];
    }
    ys[k - 1] + (ys[k] - ys[k - 1]) * (x - x0) / (x1 - x0)
}

/// Input line as a sum of components.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttenuationChain {
    #[serde(rename = "component", default)]
    pub components: Vec<AttenuationComponent>,
}

impl AttenuationChain {
    pub fn new(components: Vec<AttenuationComponent>) -> Result<Self> {
        for c in &components {
            c.validate()?;
        }
        Ok(Self { components })
    }

    /// Frequencies covered by every component, or `None` for an empty or
    /// disjoint chain.
    pub fn range(&self) -> Option<(f64, f64)> {
        let lo = self.components.iter().map(|c| c.range().0).fold(f64::NEG_INFINITY, f64::max);
        let hi = self.components.iter().map(|c| c.range().1).fold(f64::INFINITY, f64::min);
        (!self.components.is_empty() && lo <= hi).then_some((lo, hi))
    }

    pub fn total_attenuation(&self, f: f64) -> Result<f64> {
        total_attenuation(self, f)
    }
}

/// Sum of the interpolated component attenuations at `f`, dB.
pub fn total_attenuation(chain: &AttenuationChain, f: f64) -> Result<f64> {
    chain.components.iter().map(|c| c.at(f)).sum()
}

/// Running median over an odd window, truncated at the ends.
pub fn moving_median(values: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return values.to_vec();
    }
    let half = window / 2;
    let mut buf = Vec::with_capacity(window);
    (0..values.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(values.len());
            buf.clear();
            buf.extend_from_slice(&values[lo..hi]);
            buf.sort_by(f64::total_cmp);
            let m = buf.len();
            if m % 2 == 1 {
                buf[m / 2]
            } else {
                0.5 * (buf[m / 2 - 1] + buf[m / 2])
            }
        })
        .collect()
}

/// Attenuation of a component from two calibration traces, measured with
/// and without it: `|S21_with|_dB - |S21_ref|_dB` on the frequencies of
/// `with_component` that fall inside the reference sweep, smoothed by a
/// moving median of `window` points.
pub fn component_from_difference(
    reference: &S21Trace,
    with_component: &S21Trace,
    name: impl Into<String>,
    window: usize,
) -> Result<AttenuationComponent> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid(format!("median window must be odd, got {window}")));
    }
    let ref_db = reference.magnitude_db();
    let (lo, hi) = (reference.freqs[0], reference.freqs[reference.len() - 1]);
    let mut freqs = Vec::new();
    let mut diff = Vec::new();
    for (f, z) in with_component.freqs.iter().zip(&with_component.s21) {
        if *f >= lo && *f <= hi {
            freqs.push(*f);
            diff.push(20.0 * z.norm().log10() - interpolate(&reference.freqs, &ref_db, *f));
        }
    }
    if freqs.is_empty() {
        return Err(Error::invalid("calibration traces share no frequency band"));
    }
    if diff.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("calibration trace has zero transmission"));
    }
    AttenuationComponent::new(name, freqs, moving_median(&diff, window))
}

/// Frequencies (Hz) and total input-line attenuations (dB) of the seven
/// measured resonators.
pub const PUBLISHED_TOTALS: [(f64, f64); 7] = [
    (4.02e9, -75.8),
    (4.49e9, -76.1),
    (4.81e9, -76.5),
    (5.34e9, -77.0),
    (6.01e9, -77.9),
    (6.16e9, -78.1),
    (6.86e9, -79.0),
];

/// Synthetic chain reproducing [`PUBLISHED_TOTALS`]: a coaxial cable with
/// linearly rising loss, a 46 dB attenuator, a 20 dB filter plus attenuator,
/// and the bonding/sample-box loss taking up the remainder.
pub fn synthetic_paper_chain() -> AttenuationChain {
    let (lo, hi) = (4.0e9, 7.0e9);
    let cable_db = |f: f64| -6.0 - 0.9 * (f - 4.0e9) / 1e9;
    let cable =
        AttenuationComponent { name: "cable".into(), freqs: vec![lo, hi], atten_db: vec![cable_db(lo), cable_db(hi)] };
    let attenuator = AttenuationComponent::flat("attenuator", -46.0, lo, hi).unwrap();
    let filter = AttenuationComponent::flat("filter+attenuator", -20.0, lo, hi).unwrap();
    let known = AttenuationChain { components: vec![cable, attenuator, filter] };
    let bonding_db = PUBLISHED_TOTALS.iter().map(|(f, total)| total - known.total_attenuation(*f).unwrap()).collect();
    let bonding = AttenuationComponent {
        name: "bonding".into(),
        freqs: PUBLISHED_TOTALS.iter().map(|(f, _)| *f).collect(),
        atten_db: bonding_db,
    };
    let mut components = known.components;
    components.push(bonding);
    AttenuationChain { components }
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    1e-3 * 10f64.powf(p_dbm / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * (p_w / 1e-3).log10()
}

/// On-chip power: instrument output plus room-temperature attenuation plus
/// the cryogenic chain at `f`, dBm.
pub fn input_power_dbm(source_dbm: f64, room_temperature_db: f64, chain: &AttenuationChain, f: f64) -> Result<f64> {
    Ok(source_dbm + room_temperature_db + chain.total_attenuation(f)?)
}

/// Mean photon number in a notch-coupled resonator,
/// `n = 4/(2πf Qc) · (1/Qc + 1/Qi)^-2 · P_in/(hf)`, with `P_in` in W.
pub fn photon_number(p_in: f64, f: f64, qc: f64, qi: f64) -> Result<f64> {
    if !(p_in >= 0.0 && f > 0.0 && qc > 0.0 && qi > 0.0) {
        return Err(Error::domain(format!(
            "photon number needs P_in >= 0 and positive f, Qc, Qi (got {p_in}, {f}, {qc}, {qi})"
        )));
    }
    let loaded = 1.0 / (1.0 / qc + 1.0 / qi);
    Ok(4.0 / (2.0 * PI * f * qc) * loaded * loaded * p_in / (PLANCK * f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn trace(gain_db: f64) -> S21Trace {
        let freqs: Vec<f64> = (0..64).map(|k| 4e9 + k as f64 * 5e7).collect();
        let s21 = freqs
            .iter()
            .map(|f| Complex64::from_polar(10f64.powf(gain_db / 20.0) * (1.0 + 0.01 * (f / 1e9).sin()), 0.3))
            .collect();
        S21Trace::new(freqs, s21).unwrap()
    }

    #[test]
    fn identical_traces_give_zero() {
        let c = component_from_difference(&trace(-3.0), &trace(-3.0), "x", 11).unwrap();
        assert!(c.atten_db.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn attenuator_difference_is_flat() {
        let c = component_from_difference(&trace(-3.0), &trace(-49.0), "attenuator", 11).unwrap();
        assert!(c.atten_db.iter().all(|v| (v + 46.0).abs() < 1e-9));
    }

    #[test]
    fn disjoint_traces_are_rejected() {
        let a = trace(0.0);
        let mut b = trace(0.0);
        b.freqs.iter_mut().for_each(|f| *f += 10e9);
        assert!(component_from_difference(&a, &b, "x", 11).is_err());
    }

    #[test]
    fn chain_sums_and_checks_range() {
        let empty = AttenuationChain::default();
        assert_eq!(total_attenuation(&empty, 5e9).unwrap(), 0.0);
        let chain = AttenuationChain::new(vec![
            AttenuationComponent::flat("a", -40.0, 4e9, 7e9).unwrap(),
            AttenuationComponent::flat("b", -36.0, 4e9, 7e9).unwrap(),
        ])
        .unwrap();
        assert_eq!(total_attenuation(&chain, 5.5e9).unwrap(), -76.0);
        assert!(matches!(total_attenuation(&chain, 8e9), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn synthetic_chain_hits_published_totals() {
        let chain = synthetic_paper_chain();
        for (f, total) in PUBLISHED_TOTALS {
            assert!((chain.total_attenuation(f).unwrap() - total).abs() < 1e-9);
        }
        assert_eq!(chain.range(), Some((4.02e9, 6.86e9)));
    }

    #[test]
    fn median_removes_spikes() {
        let mut v = vec![1.0; 21];
        v[10] = 100.0;
        assert!(moving_median(&v, 11).iter().all(|x| *x == 1.0));
    }

    #[test]
    fn photon_number_basics() {
        assert_eq!(photon_number(0.0, 6e9, 1.7e6, 9.6e6).unwrap(), 0.0);
        let a = photon_number(1e-18, 6e9, 1.7e6, 9.6e6).unwrap();
        let b = photon_number(2e-18, 6e9, 1.7e6, 9.6e6).unwrap();
        assert!((b / a - 2.0).abs() < 1e-14);
        assert!(photon_number(1e-18, 0.0, 1.7e6, 9.6e6).is_err());
    }

    #[test]
    fn dbm_round_trip() {
        for p in [-180.0, -80.0, 0.0, 13.0] {
            assert!((watts_to_dbm(dbm_to_watts(p)) - p).abs() < 1e-12 * p.abs().max(1.0));
        }
    }
}
