use serde::{Deserialize, Serialize};

use super::elliptic::k_ratio;
use crate::constants::SPEED_OF_LIGHT;
use crate::optim::find_root;
use crate::{Error, Result};

/// Height of the shielding lid above the chip, m.
pub const DEFAULT_SHIELD_HEIGHT: f64 = 1.5e-3;

/// Quarter-wave coplanar waveguide cross-section and length.
///
/// `g` is the total slot width: the center conductor plus both gaps,
/// `g = w + 2 gap`. Use [`CpwGeometry::from_gap`] when the gap is what you
/// have.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpwGeometry {
    /// Center conductor width, m.
    pub w: f64,
    /// Center conductor plus both gaps, m.
    pub g: f64,
    /// Distance to the upper shielding, m.
    pub h: f64,
    /// Resonator length, m.
    pub length: f64,
    pub eps_sub: f64,
}

impl CpwGeometry {
    pub fn new(w: f64, g: f64, h: f64, length: f64, eps_sub: f64) -> Result<Self> {
        let geom = Self { w, g, h, length, eps_sub };
        geom.validate()?;
        Ok(geom)
    }

    pub fn from_gap(w: f64, gap: f64, h: f64, length: f64, eps_sub: f64) -> Result<Self> {
        Self::new(w, w + 2.0 * gap, h, length, eps_sub)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.w, self.g, self.h, self.length, self.eps_sub].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("CPW geometry has non-finite fields"));
        }
        if !(self.w > 0.0 && self.w < self.g) {
            return Err(Error::domain(format!("CPW needs 0 < w < g, got w = {}, g = {}", self.w, self.g)));
        }
        if self.h <= 0.0 || self.length <= 0.0 {
            return Err(Error::domain("CPW needs h > 0 and L > 0"));
        }
        if self.eps_sub < 1.0 {
            return Err(Error::domain(format!("eps_sub must be >= 1, got {}", self.eps_sub)));
        }
        Ok(())
    }

    /// Width of one gap, `(g - w) / 2`.
    pub fn gap(&self) -> f64 {
        0.5 * (self.g - self.w)
    }

    pub fn k1(&self) -> f64 {
        self.w / self.g
    }

    pub fn k2(&self) -> f64 {
        let s = std::f64::consts::PI / (2.0 * self.h);
        (s * self.w).tanh() / (s * self.g).tanh()
    }

    pub fn with_length(self, length: f64) -> Self {
        Self { length, ..self }
    }

    /// `K(k1)/K(k1')` and `K(k2)/K(k2')`.
    fn ratios(&self) -> Result<(f64, f64)> {
        self.validate()?;
        Ok((k_ratio(self.k1())?, k_ratio(self.k2())?))
    }
}

/// Effective permittivity of the shielded CPW.
pub fn cpw_eps_eff(geom: &CpwGeometry) -> Result<f64> {
    let (r1, r2) = geom.ratios()?;
    let q = r2 / r1;
    Ok((1.0 + geom.eps_sub * q) / (1.0 + q))
}

/// Fundamental frequency of the quarter-wave resonator, Hz.
pub fn cpw_frequency(geom: &CpwGeometry) -> Result<f64> {
    let eps = cpw_eps_eff(geom)?;
    Ok(SPEED_OF_LIGHT / (4.0 * geom.length * eps.sqrt()))
}

/// Characteristic impedance, Ω.
pub fn cpw_impedance(geom: &CpwGeometry) -> Result<f64> {
    let (r1, r2) = geom.ratios()?;
    let eps = cpw_eps_eff(geom)?;
    Ok(60.0 * std::f64::consts::PI / eps.sqrt() / (r1 + r2))
}

/// Length that puts the quarter-wave resonance at `frequency_hz`.
pub fn length_for_frequency(geom: &CpwGeometry, frequency_hz: f64) -> Result<f64> {
    if !(frequency_hz > 0.0) {
        return Err(Error::domain("target frequency must be positive"));
    }
    let eps = cpw_eps_eff(geom)?;
    Ok(SPEED_OF_LIGHT / (4.0 * frequency_hz * eps.sqrt()))
}

/// Gap (one side) giving characteristic impedance `z_target` for a center
/// width `w`. The impedance grows monotonically with the gap, so the root is
/// bracketed and refined with Brent's method.
pub fn solve_gap_for_impedance(w: f64, h: f64, eps_sub: f64, z_target: f64) -> Result<f64> {
    if !(z_target > 0.0) {
        return Err(Error::domain("target impedance must be positive"));
    }
    let z_of = |gap: f64| -> Result<f64> { cpw_impedance(&CpwGeometry::from_gap(w, gap, h, 1.0, eps_sub)?) };
    let mut lo = 1e-4 * w;
    let mut hi = w;
    while z_of(hi)? < z_target {
        hi *= 2.0;
        if w + 2.0 * hi > 0.5 * h * 1e3 {
            return Err(Error::domain(format!("no gap reaches {z_target} ohm for w = {w} m")));
        }
    }
    while z_of(lo)? > z_target {
        lo *= 0.1;
        if lo < 1e-9 * w {
            return Err(Error::domain(format!("{z_target} ohm is below the reachable impedance for w = {w} m")));
        }
    }
    find_root(|gap| z_of(gap).map(|z| z - z_target), lo, hi, 1e-15 * w)
}
