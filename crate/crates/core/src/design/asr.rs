use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{MU_0, SPEED_OF_LIGHT};
use crate::{Error, Result};

/// Archimedean spiral resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsrGeometry {
    /// Wire width, m.
    pub w: f64,
    /// Pitch (wire width plus spacing), m.
    pub p: f64,
    /// Number of turns.
    pub n: u32,
    /// Inner radius, m.
    pub r_in: f64,
    pub eps_sub: f64,
}

impl AsrGeometry {
    pub fn new(w: f64, p: f64, n: u32, r_in: f64, eps_sub: f64) -> Result<Self> {
        let geom = Self { w, p, n, r_in, eps_sub };
        geom.validate()?;
        Ok(geom)
    }

    /// Spiral with equal wire width and spacing starting at the center,
    /// `p = 2w`, `r_in = 0`.
    pub fn equal_spacing(w: f64, n: u32, eps_sub: f64) -> Result<Self> {
        Self::new(w, 2.0 * w, n, 0.0, eps_sub)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.w, self.p, self.r_in, self.eps_sub].iter().all(|v| v.is_finite()) {
            return Err(Error::domain("ASR geometry has non-finite fields"));
        }
        if !(self.w > 0.0 && self.p >= self.w) {
            return Err(Error::domain(format!("ASR needs p >= w > 0, got w = {}, p = {}", self.w, self.p)));
        }
        if self.n < 1 {
            return Err(Error::domain("ASR needs at least one turn"));
        }
        if self.r_in < 0.0 {
            return Err(Error::domain("ASR inner radius must be >= 0"));
        }
        if self.eps_sub < 1.0 {
            return Err(Error::domain(format!("eps_sub must be >= 1, got {}", self.eps_sub)));
        }
        Ok(())
    }

    /// Outer radius `r_in + n p`.
    pub fn r_out(&self) -> f64 {
        self.r_in + self.n as f64 * self.p
    }

    /// Fill ratio `(r_out - r_in) / (r_out + r_in)`.
    pub fn fill_ratio(&self) -> f64 {
        let r_out = self.r_out();
        (r_out - self.r_in) / (r_out + self.r_in)
    }

    /// Every length multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self { w: self.w * s, p: self.p * s, r_in: self.r_in * s, ..*self }
    }
}

/// Shape constant and current-sheet coefficients of a planar coil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilConstants {
    pub xi: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for CoilConstants {
    /// Circular coil: `xi = 0.81`, `(c1, c2, c3, c4) = (1.0, 2.5, 0.0, 0.2)`.
    fn default() -> Self {
        Self { xi: 0.81, c1: 1.0, c2: 2.5, c3: 0.0, c4: 0.2 }
    }
}

/// Effective permittivity seen by the spiral: the air/substrate average.
pub fn asr_eps_eff(geom: &AsrGeometry) -> f64 {
    0.5 * (1.0 + geom.eps_sub)
}

/// Fundamental frequency of the bare spiral, Hz. The coupling tail used on
/// real devices lowers the measured frequency, so treat this as an upper
/// bound.
pub fn asr_frequency(geom: &AsrGeometry, consts: &CoilConstants) -> Result<f64> {
    geom.validate()?;
    let r_out = geom.r_out();
    Ok(consts.xi * SPEED_OF_LIGHT / asr_eps_eff(geom).sqrt() * geom.p / (2.0 * PI * r_out * r_out))
}

/// Current-sheet inductance of a planar spiral with `turns` turns between
/// `r_in` and `r_out`, H.
pub fn current_sheet_inductance(turns: u32, r_in: f64, r_out: f64, consts: &CoilConstants) -> Result<f64> {
    if turns == 0 {
        return Ok(0.0);
    }
    let rho = (r_out - r_in) / (r_out + r_in);
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::domain(format!("fill ratio must lie in (0, 1], got {rho}")));
    }
    if !(consts.c2 / rho > 0.0) {
        return Err(Error::domain("c2 / rho must be positive"));
    }
    let n = turns as f64;
    let shape = (consts.c2 / rho).ln() + consts.c3 * rho + consts.c4 * rho * rho;
    Ok(MU_0 * n * n * (r_out + r_in) * consts.c1 / 2.0 * shape)
}

/// Geometric inductance of the spiral, H.
pub fn asr_inductance(geom: &AsrGeometry, consts: &CoilConstants) -> Result<f64> {
    geom.validate()?;
    current_sheet_inductance(geom.n, geom.r_in, geom.r_out(), consts)
}

/// Spiral impedance `2π f L`, Ω.
pub fn asr_impedance(geom: &AsrGeometry, consts: &CoilConstants) -> Result<f64> {
    let f = asr_frequency(geom, consts)?;
    let l = asr_inductance(geom, consts)?;
    Ok(super::lumped_impedance(f, l))
}

/// Standing-wave voltage at radius `x` of the fundamental mode,
/// `V0 cos(π (x / r_out)²)`.
pub fn asr_voltage_profile(geom: &AsrGeometry, x: f64, v0: f64) -> Result<f64> {
    let r_out = geom.r_out();
    if !(0.0..=r_out).contains(&x) {
        return Err(Error::domain(format!("radius {x} outside [0, {r_out}]")));
    }
    let u = x / r_out;
    Ok(v0 * (PI * u * u).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_asr(w_um: f64) -> AsrGeometry {
        AsrGeometry::equal_spacing(w_um * 1e-6, 12, 11.45).unwrap()
    }

    #[test]
    fn frequency_scales_inversely_with_size() {
        let c = CoilConstants::default();
        let g = paper_asr(12.0);
        let f = asr_frequency(&g, &c).unwrap();
        for s in [0.5, 2.0, 3.7] {
            let fs = asr_frequency(&g.scaled(s), &c).unwrap();
            assert!((fs - f / s).abs() / f < 1e-14);
        }
        // doubling the pitch at r_in = 0 halves f
        let g2 = AsrGeometry { p: 2.0 * g.p, ..g };
        assert!((asr_frequency(&g2, &c).unwrap() - f / 2.0).abs() / f < 1e-14);
        // n -> 4n, p -> p/4 at fixed r_out divides f by 4
        let g3 = AsrGeometry { n: 48, p: g.p / 4.0, w: g.w / 4.0, ..g };
        assert!((asr_frequency(&g3, &c).unwrap() - f / 4.0).abs() / f < 1e-14);
    }

    #[test]
    fn no_turns_no_inductance() {
        let c = CoilConstants::default();
        assert_eq!(current_sheet_inductance(0, 0.0, 0.0, &c).unwrap(), 0.0);
        assert_eq!(super::super::lumped_impedance(5e9, 0.0), 0.0);
    }

    #[test]
    fn inductance_scales_linearly_with_size() {
        let c = CoilConstants::default();
        let g = AsrGeometry::new(10e-6, 25e-6, 9, 40e-6, 11.45).unwrap();
        let l = asr_inductance(&g, &c).unwrap();
        let l2 = asr_inductance(&g.scaled(2.0), &c).unwrap();
        assert!((l2 - 2.0 * l).abs() / l < 1e-14);
    }

    #[test]
    fn impedance_is_two_pi_f_l() {
        let c = CoilConstants::default();
        for w in [7.0, 8.0, 10.0, 12.0] {
            let g = paper_asr(w);
            let z = asr_impedance(&g, &c).unwrap();
            let expect = 2.0 * PI * asr_frequency(&g, &c).unwrap() * asr_inductance(&g, &c).unwrap();
            assert!((z - expect).abs() / expect < 1e-12);
        }
    }

    #[test]
    fn voltage_profile_endpoints() {
        let g = paper_asr(12.0);
        let r = g.r_out();
        assert_eq!(asr_voltage_profile(&g, 0.0, 2.0).unwrap(), 2.0);
        assert!((asr_voltage_profile(&g, r, 2.0).unwrap() + 2.0).abs() < 1e-15);
        assert!(asr_voltage_profile(&g, r / 2f64.sqrt(), 1.0).unwrap().abs() < 1e-15);
        assert!(asr_voltage_profile(&g, -1e-9, 1.0).is_err());
        assert!(asr_voltage_profile(&g, r * 1.0001, 1.0).is_err());
    }

    #[test]
    fn voltage_profile_single_zero_crossing() {
        let g = paper_asr(8.0);
        let r = g.r_out();
        let samples: Vec<f64> =
            (1..2000).map(|i| asr_voltage_profile(&g, r * i as f64 / 2000.0, 1.0).unwrap()).collect();
        let crossings = samples.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        assert_eq!(crossings, 1);
        assert!(samples.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(AsrGeometry::new(10e-6, 5e-6, 12, 0.0, 11.45).is_err());
        assert!(AsrGeometry::new(10e-6, 20e-6, 0, 0.0, 11.45).is_err());
        assert!(AsrGeometry::new(10e-6, 20e-6, 12, -1e-6, 11.45).is_err());
    }
}
