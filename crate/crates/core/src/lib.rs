//! Design and analysis toolkit for superconducting planar resonators.
//!
//! The crate covers two halves of the resonator workflow:
//!
//! * design: closed-form frequency and impedance of quarter-wave coplanar
//!   waveguides and Archimedean spirals ([`design`]), and a 2D electrostatic
//!   solver for interface participation ratios ([`field`]);
//! * measurement: notch-port S21 fitting ([`fit`]), input-line calibration
//!   and photon number ([`calibration`]), power-dependent TLS loss fitting
//!   ([`tls`]) and loss-fluctuation statistics ([`stats`]).
//!
//! File formats and result records live in [`io`].

pub mod calibration;
pub mod constants;
pub mod design;
mod error;
pub mod field;
pub mod fit;
pub mod io;
pub mod optim;
pub mod stats;
pub mod tls;

pub use error::{Error, Result};
