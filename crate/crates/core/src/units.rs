//! Physical constants and unit conversions.
//!
//! Conversion between linear (Hz) and angular (rad/s) quantities happens
//! only at file and command-line boundaries.

use std::f64::consts::TAU;

/// Planck constant, J·s (exact, SI 2019).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = PLANCK / TAU;
/// Boltzmann constant, J/K (exact, SI 2019).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// 2π·1 MHz in rad/s.
pub const MHZ: f64 = TAU * 1e6;
/// 2π·1 GHz in rad/s.
pub const GHZ: f64 = TAU * 1e9;

#[inline]
pub fn hz_to_angular(f_hz: f64) -> f64 {
    TAU * f_hz
}

#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Power ratio in dB of a complex amplitude.
#[inline]
pub fn amplitude_db(magnitude: f64) -> f64 {
    20.0 * magnitude.log10()
}

/// Amplitude ratio corresponding to a level in dB.
#[inline]
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}
