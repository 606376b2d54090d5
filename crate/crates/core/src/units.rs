//! Physical constants and unit conversions.
//!
//! Every frequency-like quantity in the crate is a linear frequency (ω/2π)
//! in MHz. Powers are SI watts. Conversions to angular SI units happen only
//! where a formula mixes frequencies with powers.

use std::f64::consts::PI;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Multiply a linear frequency in MHz by this to get rad/s.
pub const MHZ_TO_RAD_PER_S: f64 = 2.0 * PI * 1.0e6;

pub const ATTOWATT: f64 = 1.0e-18;
pub const FEMTOWATT: f64 = 1.0e-15;

/// Photon energy ħω for a linear frequency given in MHz.
pub fn photon_energy(freq_mhz: f64) -> f64 {
    HBAR * freq_mhz * MHZ_TO_RAD_PER_S
}

/// Photon flux P/(ħω) in 1/s.
pub fn photon_flux(power_w: f64, freq_mhz: f64) -> f64 {
    power_w / photon_energy(freq_mhz)
}

pub fn mhz_to_ghz(f: f64) -> f64 {
    f * 1.0e-3
}

pub fn ghz_to_mhz(f: f64) -> f64 {
    f * 1.0e3
}
