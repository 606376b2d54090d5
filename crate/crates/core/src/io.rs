//! Input-output models: the cavity-magnon avoided crossing, the coupler
//! reflection spectrum, port-driven occupancies and the Kittel-mode drive.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{self, SystemParams};
use crate::units::{self, FEMTOWATT, MHZ_TO_RAD_PER_S};

/// Cavity modes summed over in the Kittel-mode drive, in parameter order.
pub const DEFAULT_DRIVE_MODES: usize = 3;

/// Avoided-crossing branch parameters. `p1` in MHz/mA, the rest in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    /// |g_m-c|.
    pub p4: f64,
}

impl CrossingParams {
    /// Build from physical quantities: coupler frequency, coupling, current
    /// at resonance (mA) and the magnon tuning rate dω_m/dI (MHz/mA).
    pub fn from_physical(coupler_freq: f64, coupling: f64, i0: f64, tuning: f64) -> Result<Self> {
        if tuning == 0.0 || !tuning.is_finite() {
            return Err(Error::input("magnon tuning rate must be finite and nonzero"));
        }
        let p1 = tuning / 2.0;
        let p3 = p1 * i0;
        let p = CrossingParams { p1, p2: coupler_freq - p3, p3, p4: coupling.abs() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p1", self.p1), ("p2", self.p2), ("p3", self.p3), ("p4", self.p4)] {
            if !v.is_finite() {
                return Err(Error::input(format!("{name} must be finite, got {v}")));
            }
        }
        if self.p4 < 0.0 {
            return Err(Error::input(format!("p4 = |g| must be >= 0, got {}", self.p4)));
        }
        if self.p1 == 0.0 {
            return Err(Error::input("p1 must be nonzero for the crossing to exist"));
        }
        Ok(())
    }

    /// Coupler frequency bare of the magnon, p2 + p3.
    pub fn coupler_freq(&self) -> f64 {
        self.p2 + self.p3
    }

    /// Magnon frequency bare of the coupler at current `i` (mA).
    pub fn magnon_freq(&self, i: f64) -> f64 {
        self.p2 - self.p3 + 2.0 * self.p1 * i
    }

    pub fn coupling(&self) -> f64 {
        self.p4
    }

    /// Current (mA) at which the bare lines cross.
    pub fn resonance_current(&self) -> f64 {
        self.p3 / self.p1
    }

    /// Both hybridized branches (lower, upper) at current `i`.
    pub fn branches(&self, i: f64) -> (f64, f64) {
        let mid = self.p1 * i + self.p2;
        let root = ((self.p1 * i - self.p3).powi(2) + self.p4 * self.p4).sqrt();
        (mid - root, mid + root)
    }
}

/// Coupler-like dressed branch at current `i`. At `i = I_0` the sign is +1.
pub fn crossing_branch(i: f64, p: &CrossingParams) -> f64 {
    let sgn = if i - p.resonance_current() < 0.0 { -1.0 } else { 1.0 };
    p.p1 * i + p.p2 - sgn * ((p.p1 * i - p.p3).powi(2) + p.p4 * p.p4).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionParams {
    pub coupler_freq: f64,
    pub kappa_int: f64,
    pub kappa_cpl: f64,
    pub coupling: f64,
    pub gamma_m: f64,
    /// Magnon frequency bare of the coupler at the current of interest.
    pub magnon_freq: f64,
}

impl ReflectionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa_int", self.kappa_int),
            ("kappa_cpl", self.kappa_cpl),
            ("gamma_m", self.gamma_m),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("coupler_freq", self.coupler_freq),
            ("coupling", self.coupling),
            ("magnon_freq", self.magnon_freq),
        ] {
            if !v.is_finite() {
                return Err(Error::input(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Complex reflection coefficient of the coupler port at readout frequency `omega_r`.
pub fn reflection(omega_r: f64, rp: &ReflectionParams) -> Complex64 {
    let magnon = rp.coupling * rp.coupling / Complex64::new(omega_r - rp.magnon_freq, rp.gamma_m / 2.0);
    let det = omega_r - rp.coupler_freq;
    let num = Complex64::new(det, (rp.kappa_int - rp.kappa_cpl) / 2.0) - magnon;
    let den = Complex64::new(det, (rp.kappa_int + rp.kappa_cpl) / 2.0) - magnon;
    num / den
}

/// Mean intracavity occupancy driven through a port of rate `kappa_cpl`
/// at power `p_r` (W), on resonance with a mode of total linewidth `kappa`.
pub fn probe_occupancy(p_r: f64, omega_p: f64, kappa_cpl: f64, kappa: f64) -> Result<f64> {
    if !(p_r >= 0.0) || !p_r.is_finite() {
        return Err(Error::input(format!("readout power must be >= 0, got {p_r}")));
    }
    if !(omega_p > 0.0 && kappa > 0.0 && kappa_cpl >= 0.0) {
        return Err(Error::input("frequency and linewidth must be > 0, coupling rate >= 0"));
    }
    let k_cpl = kappa_cpl * MHZ_TO_RAD_PER_S;
    let half_k = kappa * MHZ_TO_RAD_PER_S / 2.0;
    Ok(units::photon_flux(p_r, omega_p) * k_cpl / (half_k * half_k))
}

/// Steady-state occupancy of a linear oscillator driven with strength
/// `omega`, linewidth `gamma` and detuning `delta`.
pub fn linear_occupancy(omega: f64, gamma: f64, delta: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::input(format!("linewidth must be > 0, got {gamma}")));
    }
    Ok(omega * omega / ((gamma / 2.0).powi(2) + delta * delta))
}

/// The bracketed mode sum of the Kittel drive, in √MHz (linear units).
fn drive_mode_sum(params: &SystemParams, n_modes: usize, g_qm: f64) -> Result<f64> {
    if n_modes == 0 || n_modes > params.cavity_modes.len() {
        return Err(Error::input(format!(
            "drive sum needs 1..={} cavity modes, got {n_modes}",
            params.cavity_modes.len()
        )));
    }
    let delta_qm = params.qubit_bare_freq - params.magnon_bare_freq;
    if delta_qm == 0.0 {
        return Err(Error::input("qubit and magnon are resonant; the dispersive drive formula does not apply"));
    }
    let mut sum = 0.0;
    for mode in &params.cavity_modes[..n_modes] {
        let (kappa, k_cpl) = match (mode.linewidth, mode.coupling_rate) {
            (Some(k), Some(c)) => (k, c),
            _ => {
                return Err(Error::input(format!(
                    "cavity mode `{}` needs linewidth and coupling_rate for the drive",
                    mode.label
                )))
            }
        };
        let delta_m = mode.bare_freq - params.magnon_bare_freq;
        if delta_m == 0.0 {
            return Err(Error::input(format!(
                "magnon is resonant with `{}`; the dispersive drive formula does not apply",
                mode.label
            )));
        }
        sum += k_cpl.sqrt()
            * (mode.magnon_coupling / delta_m
                + g_qm * mode.qubit_coupling / (delta_qm * (delta_m * delta_m + kappa * kappa).sqrt()));
    }
    Ok(sum)
}

/// Qubit-magnon coupling for the drive: the measured value when given,
/// otherwise the diagonalized one.
fn drive_coupling(params: &SystemParams) -> Result<f64> {
    match params.measured_coupling_qm {
        Some(g) => Ok(g),
        None => hybrid::extract_coupling_qm(params, None),
    }
}

/// Drive strength Ω_mw (MHz) of the Kittel mode for power `p_mw` (W) at
/// drive frequency `omega_mw`, summed over the first `n_modes` cavity modes.
pub fn kittel_drive_strength(p_mw: f64, params: &SystemParams, omega_mw: f64, n_modes: usize) -> Result<f64> {
    if !(p_mw >= 0.0) || !p_mw.is_finite() {
        return Err(Error::input(format!("drive power must be >= 0, got {p_mw}")));
    }
    if !(omega_mw > 0.0) {
        return Err(Error::input("drive frequency must be > 0"));
    }
    let sum = drive_mode_sum(params, n_modes, drive_coupling(params)?)?;
    // √(flux)·√(κ_cpl) is in rad/s when κ_cpl is; convert back to MHz.
    let rad = units::photon_flux(p_mw, omega_mw).sqrt() * sum * MHZ_TO_RAD_PER_S.sqrt();
    Ok(rad / MHZ_TO_RAD_PER_S)
}

/// Occupancy per femtowatt of Kittel drive at frequency `omega_mw`.
pub fn occupancy_slope_at(
    params: &SystemParams,
    gamma_m: f64,
    delta_mw: f64,
    omega_mw: f64,
    n_modes: usize,
) -> Result<f64> {
    let omega = kittel_drive_strength(FEMTOWATT, params, omega_mw, n_modes)?;
    linear_occupancy(omega, gamma_m, delta_mw)
}

/// Occupancy per femtowatt with the drive detuned by `delta_mw` from the
/// dressed magnon frequency, which is obtained by diagonalization.
pub fn occupancy_slope(params: &SystemParams, gamma_m: f64, delta_mw: f64) -> Result<f64> {
    let omega_mw = drive_frequency(params, delta_mw)?;
    occupancy_slope_at(params, gamma_m, delta_mw, omega_mw, DEFAULT_DRIVE_MODES)
}

/// ω_mw = ω_m^g − Δ_mw.
pub fn drive_frequency(params: &SystemParams, delta_mw: f64) -> Result<f64> {
    let levels = hybrid::level_quantities(params, &params.default_layout()?)?;
    Ok(levels.magnon_dressed_freq - delta_mw)
}

/// Symmetric half-widths of the inputs varied for the slope bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeUncertainty {
    pub coupler_cpl: f64,
    pub probe_cpl: f64,
    pub gamma_m: f64,
    pub delta_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub min: f64,
    pub max: f64,
}

/// Slope with the extremal values found on a 3-point grid per varied input
/// (low, central, high), which includes every corner of the box.
pub fn occupancy_slope_bounds(
    params: &SystemParams,
    gamma_m: f64,
    delta_mw: f64,
    unc: &SlopeUncertainty,
) -> Result<SlopeEstimate> {
    let omega_mw = drive_frequency(params, delta_mw)?;
    let slope = occupancy_slope_at(params, gamma_m, delta_mw, omega_mw, DEFAULT_DRIVE_MODES)?;
    let steps = [-1.0, 0.0, 1.0];
    let (mut min, mut max) = (slope, slope);
    for a in steps {
        for b in steps {
            for c in steps {
                for d in steps {
                    let mut p = params.clone();
                    shift_coupling_rate(&mut p, &params.coupler_mode, a * unc.coupler_cpl)?;
                    shift_coupling_rate(&mut p, &params.probe_mode, b * unc.probe_cpl)?;
                    let g = gamma_m + c * unc.gamma_m;
                    let s = occupancy_slope_at(&p, g, delta_mw + d * unc.delta_mw, omega_mw, DEFAULT_DRIVE_MODES)?;
                    min = min.min(s);
                    max = max.max(s);
                }
            }
        }
    }
    Ok(SlopeEstimate { slope, min, max })
}

fn shift_coupling_rate(p: &mut SystemParams, label: &str, by: f64) -> Result<()> {
    let mode = p
        .cavity_modes
        .iter_mut()
        .find(|m| m.label == label)
        .ok_or_else(|| Error::input(format!("no cavity mode labeled `{label}`")))?;
    let rate = mode
        .coupling_rate
        .ok_or_else(|| Error::input(format!("`{label}` has no coupling rate")))?;
    mode.coupling_rate = Some((rate + by).max(0.0));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crossing() -> CrossingParams {
        CrossingParams::from_physical(8456.0, 22.5, 5.5, 23.8).unwrap()
    }

    #[test]
    fn crossing_derived_quantities() {
        let p = crossing();
        assert!((p.coupler_freq() - 8456.0).abs() < 1e-9);
        assert!((p.resonance_current() - 5.5).abs() < 1e-12);
        assert!((p.magnon_freq(p.resonance_current()) - p.coupler_freq()).abs() < 1e-6);
        assert_eq!(p.coupling(), 22.5);
    }

    #[test]
    fn zero_coupling_follows_bare_lines() {
        let p = CrossingParams { p4: 0.0, ..crossing() };
        assert!((crossing_branch(2.0, &p) - p.coupler_freq()).abs() < 1e-9);
        assert!((crossing_branch(9.0, &p) - p.coupler_freq()).abs() < 1e-9);
        let (lo, hi) = p.branches(2.0);
        assert!((lo - p.magnon_freq(2.0)).abs() < 1e-9);
        assert!((hi - p.coupler_freq()).abs() < 1e-9);
    }

    #[test]
    fn gap_at_resonance_is_twice_coupling() {
        let p = crossing();
        let (lo, hi) = p.branches(p.resonance_current());
        assert!((hi - lo - 45.0).abs() < 1e-9);
        // sgn(0) = +1 picks the lower branch
        assert_eq!(crossing_branch(p.resonance_current(), &p), lo);
    }

    fn uncoupled_reflection(omega_r: f64) -> ReflectionParams {
        ReflectionParams {
            coupler_freq: 8456.0,
            kappa_int: 1.57,
            kappa_cpl: 0.51,
            coupling: 0.0,
            gamma_m: 1.3,
            magnon_freq: omega_r,
        }
    }

    #[test]
    fn reflection_limits() {
        let rp = uncoupled_reflection(8000.0);
        assert!((reflection(9000.0, &rp) - 1.0).norm() < 1e-3);
        let critical = ReflectionParams { kappa_int: 0.51, ..rp };
        assert!(reflection(8456.0, &critical).norm() < 1e-15);
    }

    #[test]
    fn probe_occupancy_values() {
        assert_eq!(probe_occupancy(0.0, 10449.16, 1.27, 3.72).unwrap(), 0.0);
        let n = probe_occupancy(9.2e-18, 10449.16, 1.27, 3.72).unwrap();
        assert!((n - 0.078).abs() < 0.001, "{n}");
        let n2 = probe_occupancy(18.4e-18, 10449.16, 1.27, 3.72).unwrap();
        assert!((n2 - 2.0 * n).abs() < 1e-15);
    }

    #[test]
    fn linear_occupancy_values() {
        assert_eq!(linear_occupancy(0.0, 1.3, 0.2).unwrap(), 0.0);
        assert!((linear_occupancy(0.65, 1.3, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(linear_occupancy(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn drive_rejects_resonances_and_missing_rates() {
        let mut p = SystemParams::reference_device();
        p.magnon_bare_freq = p.qubit_bare_freq;
        assert!(matches!(kittel_drive_strength(1e-15, &p, 7950.0, 3), Err(Error::InvalidInput(_))));
        let mut p = SystemParams::reference_device();
        p.magnon_bare_freq = p.cavity_modes[1].bare_freq;
        assert!(kittel_drive_strength(1e-15, &p, 7950.0, 3).is_err());
        let p = SystemParams::reference_device();
        assert!(kittel_drive_strength(1e-15, &p, 7950.0, 4).is_err());
        assert!(kittel_drive_strength(1e-15, &p, 7950.0, 0).is_err());
    }

    #[test]
    fn drive_vanishes_without_couplings() {
        let p = SystemParams::reference_device().with_scaled_couplings(0.0);
        assert_eq!(kittel_drive_strength(1e-15, &p, 7950.0, 3).unwrap(), 0.0);
    }
}
