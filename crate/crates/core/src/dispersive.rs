//! Qubit spectrum of a transmon dispersively coupled to a driven, damped
//! oscillator, and the number-state probabilities read off it.
//!
//! The model resolves the qubit line into one peak per oscillator number
//! state. Peak `n` sits at `ω_q + B + n(2χ + Δ_d)` with width
//! `γ_q + κ(n + D_ss)` and complex weight `(−A)^n e^A / n!`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ladder truncation.
pub const DEFAULT_N_MAX: usize = 10;
/// Component weights below this are treated as genuinely negative.
pub const NEGATIVE_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    /// Qubit frequency with the oscillator in vacuum.
    pub omega_q: f64,
    pub gamma_q: f64,
    pub chi: f64,
    pub kappa: f64,
    /// Oscillator frequency minus drive frequency.
    pub delta_d: f64,
    /// Drive strength Ω_d. Only its square enters.
    pub drive: f64,
    pub n_max: usize,
}

impl SpectrumModel {
    /// Model parameterized by the ground-state occupancy instead of the drive.
    pub fn from_occupancy(
        omega_q: f64,
        gamma_q: f64,
        chi: f64,
        kappa: f64,
        delta_d: f64,
        nbar_g: f64,
    ) -> Result<Self> {
        if !(nbar_g >= 0.0) || !nbar_g.is_finite() {
            return Err(Error::input(format!("occupancy must be finite and >= 0, got {nbar_g}")));
        }
        let drive = (nbar_g * ((kappa / 2.0).powi(2) + delta_d * delta_d)).sqrt();
        let m = SpectrumModel { omega_q, gamma_q, chi, kappa, delta_d, drive, n_max: DEFAULT_N_MAX };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_q", self.omega_q),
            ("chi", self.chi),
            ("delta_d", self.delta_d),
            ("drive", self.drive),
        ] {
            if !v.is_finite() {
                return Err(Error::input(format!("{name} must be finite, got {v}")));
            }
        }
        if !(self.gamma_q > 0.0 && self.gamma_q.is_finite()) {
            return Err(Error::input(format!("qubit linewidth must be > 0, got {}", self.gamma_q)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::input(format!("oscillator linewidth must be > 0, got {}", self.kappa)));
        }
        if self.n_max < 1 {
            return Err(Error::input("ladder truncation must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumComponents {
    pub a: Complex64,
    pub b: f64,
    pub d_ss: f64,
    pub nbar_g: f64,
    pub nbar_e: f64,
    pub peak_freqs: Vec<f64>,
    pub linewidths: Vec<f64>,
    /// `(−A)^n e^A / n!` for n = 0..=n_max.
    pub amplitudes: Vec<Complex64>,
}

impl SpectrumComponents {
    /// Integrated weight of each component, `Re[(−A)^n e^A]/n!`.
    pub fn weights(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.re).collect()
    }

    /// Component `n` evaluated at `omega`.
    pub fn component_at(&self, n: usize, omega: f64) -> f64 {
        let denom = Complex64::new(self.linewidths[n], -(omega - self.peak_freqs[n]));
        (self.amplitudes[n] / denom).re / std::f64::consts::PI
    }
}

pub fn spectrum_components(m: &SpectrumModel) -> Result<SpectrumComponents> {
    m.validate()?;
    let half_k = m.kappa / 2.0;
    let omega2 = m.drive * m.drive;
    let nbar_g = omega2 / (half_k * half_k + m.delta_d * m.delta_d);
    let nbar_e = omega2 / (half_k * half_k + (m.delta_d + 2.0 * m.chi).powi(2));
    let d_ss = 2.0 * (nbar_g + nbar_e) * m.chi * m.chi
        / (half_k * half_k + m.chi * m.chi + (m.chi + m.delta_d).powi(2));
    let step = 2.0 * m.chi + m.delta_d;
    let a = d_ss * Complex64::new(half_k, -step) / Complex64::new(half_k, step);
    let b = m.chi * (nbar_g + nbar_e - d_ss);

    let mut amplitudes = Vec::with_capacity(m.n_max + 1);
    let mut term = a.exp();
    for n in 0..=m.n_max {
        if n > 0 {
            term *= -a / n as f64;
        }
        amplitudes.push(term);
    }
    Ok(SpectrumComponents {
        a,
        b,
        d_ss,
        nbar_g,
        nbar_e,
        peak_freqs: (0..=m.n_max).map(|n| m.omega_q + b + n as f64 * step).collect(),
        linewidths: (0..=m.n_max).map(|n| m.gamma_q + m.kappa * (n as f64 + d_ss)).collect(),
        amplitudes,
    })
}

/// Spectrum on a grid, with the per-number-state components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub total: Vec<f64>,
    /// `components[n][i]` is S_n at `omega[i]`.
    pub components: Vec<Vec<f64>>,
}

pub fn spectrum(m: &SpectrumModel, omega: &[f64]) -> Result<Spectrum> {
    check_grid(omega)?;
    let c = spectrum_components(m)?;
    let components: Vec<Vec<f64>> = (0..=m.n_max)
        .map(|n| omega.iter().map(|&w| c.component_at(n, w)).collect())
        .collect();
    let total = (0..omega.len()).map(|i| components.iter().map(|s| s[i]).sum()).collect();
    Ok(Spectrum { omega: omega.to_vec(), total, components })
}

fn check_grid(omega: &[f64]) -> Result<()> {
    if let Some(w) = omega.iter().find(|w| !w.is_finite()) {
        return Err(Error::input(format!("spectrum grid contains non-finite value {w}")));
    }
    Ok(())
}

/// Magnon-ladder spectrum dressed with the one-photon peak of the probe mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeModel {
    /// Magnon ladder; `omega_q` and `gamma_q` are the probe-vacuum values.
    pub magnon: SpectrumModel,
    pub chi_qp: f64,
    pub kappa_p: f64,
    /// Probe readout detuning Δ_p, zero when reading out on resonance.
    pub probe_detuning: f64,
    /// Relative spectral weight ℬ of the one-photon peak.
    pub photon_weight: f64,
    /// Conversion factor 𝒜 from S to Re(Δr).
    pub scale: f64,
    pub offset: f64,
}

impl CompositeModel {
    pub fn validate(&self) -> Result<()> {
        self.magnon.validate()?;
        if !(self.photon_weight >= 0.0) || !self.photon_weight.is_finite() {
            return Err(Error::input(format!("photon weight must be >= 0, got {}", self.photon_weight)));
        }
        if !(self.kappa_p > 0.0) || !self.kappa_p.is_finite() {
            return Err(Error::input(format!("probe linewidth must be > 0, got {}", self.kappa_p)));
        }
        for (name, v) in [
            ("chi_qp", self.chi_qp),
            ("probe_detuning", self.probe_detuning),
            ("scale", self.scale),
            ("offset", self.offset),
        ] {
            if !v.is_finite() {
                return Err(Error::input(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// The magnon ladder with `n_p` probe photons.
    fn photon_sector(&self, n_p: usize) -> SpectrumModel {
        let n_p = n_p as f64;
        SpectrumModel {
            omega_q: self.magnon.omega_q + n_p * (2.0 * self.chi_qp + self.probe_detuning),
            gamma_q: self.magnon.gamma_q + n_p * self.kappa_p,
            ..self.magnon
        }
    }
}

pub fn composite_spectrum(c: &CompositeModel, omega: &[f64]) -> Result<Vec<f64>> {
    c.validate()?;
    check_grid(omega)?;
    let zero = spectrum_components(&c.photon_sector(0))?;
    let one = spectrum_components(&c.photon_sector(1))?;
    Ok(omega
        .iter()
        .map(|&w| {
            let s: f64 = (0..=c.magnon.n_max)
                .map(|n| zero.component_at(n, w) + c.photon_weight * one.component_at(n, w))
                .sum();
            c.scale * s + c.offset
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumberProbabilities {
    pub probabilities: Vec<f64>,
    /// Number states whose weight was negative and set to zero.
    pub clipped: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Probability of each number state as its share of the integrated spectral
/// weight.
pub fn number_probabilities(c: &SpectrumComponents) -> Result<NumberProbabilities> {
    let mut weights = c.weights();
    let mut clipped = Vec::new();
    let mut warnings = Vec::new();
    for (n, w) in weights.iter_mut().enumerate() {
        if *w < -NEGATIVE_WEIGHT_TOL {
            warnings.push(format!(
                "component {n} has negative weight {w:.3e}; model is outside the dispersive regime"
            ));
            clipped.push(n);
            *w = 0.0;
        } else if *w < 0.0 {
            *w = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::numerical("spectral weights sum to zero"));
    }
    Ok(NumberProbabilities {
        probabilities: weights.iter().map(|w| w / total).collect(),
        clipped,
        warnings,
    })
}

/// Number-state probabilities of the magnon ladder of a composite model.
/// The photon weight, scale and offset never enter.
pub fn composite_probabilities(c: &CompositeModel) -> Result<NumberProbabilities> {
    c.validate()?;
    number_probabilities(&spectrum_components(&c.magnon)?)
}

/// Poisson distribution with mean `d_ss` over n = 0..=n_max.
pub fn poisson_reference(d_ss: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(d_ss >= 0.0) || !d_ss.is_finite() {
        return Err(Error::input(format!("Poisson mean must be finite and >= 0, got {d_ss}")));
    }
    let mut out = Vec::with_capacity(n_max + 1);
    let mut p = (-d_ss).exp();
    for n in 0..=n_max {
        if n > 0 {
            p *= d_ss / n as f64;
        }
        out.push(p);
    }
    Ok(out)
}

/// Qubit linewidth under a spectroscopy drive of power `p_s` (W), with
/// `eta = (2Ω_s)²/P_s` in MHz²/W.
pub fn power_broadened_linewidth(p_s: f64, eta: f64, gamma0: f64) -> Result<f64> {
    if !(p_s >= 0.0) || !p_s.is_finite() {
        return Err(Error::input(format!("power must be >= 0, got {p_s}")));
    }
    if !(gamma0 > 0.0) || !gamma0.is_finite() {
        return Err(Error::input(format!("intrinsic linewidth must be > 0, got {gamma0}")));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::input(format!("eta must be >= 0, got {eta}")));
    }
    Ok((eta * p_s + gamma0 * gamma0).sqrt())
}

/// Rabi frequency Ω_s implied by a broadened linewidth.
pub fn rabi_from_linewidth(gamma_p: f64, gamma0: f64) -> Result<f64> {
    if !(gamma0 > 0.0) || !gamma_p.is_finite() || !gamma0.is_finite() {
        return Err(Error::input(format!("invalid linewidths {gamma_p}, {gamma0}")));
    }
    if gamma_p < gamma0 {
        return Err(Error::input(format!(
            "broadened linewidth {gamma_p} is below the intrinsic linewidth {gamma0}"
        )));
    }
    Ok(0.5 * (gamma_p * gamma_p - gamma0 * gamma0).sqrt())
}

/// Linewidth (MHz) set by a Ramsey dephasing time in µs.
pub fn linewidth_from_t2(t2_star_us: f64) -> Result<f64> {
    if !(t2_star_us > 0.0) {
        return Err(Error::input(format!("T2* must be > 0, got {t2_star_us}")));
    }
    Ok(1.0 / (std::f64::consts::PI * t2_star_us))
}
