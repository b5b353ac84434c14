//! Closed-form resonator design formulas.
//!
//! Quarter-wave coplanar waveguides are described by conformal-mapping
//! expressions in the complete elliptic integral of the first kind; spirals
//! use the shape-constant frequency formula together with the current-sheet
//! inductance approximation.

mod asr;
mod cpw;
mod elliptic;

pub use asr::{
    asr_eps_eff, asr_frequency, asr_impedance, asr_inductance, asr_voltage_profile, current_sheet_inductance,
    AsrGeometry, CoilConstants,
};
pub use cpw::{
    cpw_eps_eff, cpw_frequency, cpw_impedance, length_for_frequency, solve_gap_for_impedance, CpwGeometry,
    DEFAULT_SHIELD_HEIGHT,
};
pub use elliptic::elliptic_k;

/// Characteristic impedance of a lumped LC resonator, `Z = 2π f L`.
pub fn lumped_impedance(frequency_hz: f64, inductance_h: f64) -> f64 {
    2.0 * std::f64::consts::PI * frequency_hz * inductance_h
}
