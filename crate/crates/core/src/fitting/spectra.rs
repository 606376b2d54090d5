//! Qubit-spectrum and power-broadening fits.

use serde::Serialize;

use super::engine::{least_squares_multistart, FitProblem, FitResult};
use super::{check_xy, median, scale_offset};
use crate::dispersive::{self, CompositeModel, SpectrumModel};
use crate::error::{Error, Result};

/// Upper bound on fitted mean occupancies.
const MAX_OCCUPANCY: f64 = 50.0;

/// Sign of the line (peak or dip), baseline, and the index of the extremum.
fn line_shape(y: &[f64]) -> (f64, f64, usize) {
    let base = median(y);
    let (imax, imin) = (argmax(y, 1.0), argmax(y, -1.0));
    if y[imax] - base >= base - y[imin] {
        (1.0, base, imax)
    } else {
        (-1.0, base, imin)
    }
}

fn argmax(y: &[f64], sign: f64) -> usize {
    (0..y.len()).max_by(|&a, &b| (sign * y[a]).total_cmp(&(sign * y[b]))).unwrap_or(0)
}

/// Half width at half maximum around `peak`.
fn half_width(omega: &[f64], y: &[f64], sign: f64, base: f64, peak: usize) -> f64 {
    let half = 0.5 * sign * (y[peak] - base);
    let above = |i: usize| sign * (y[i] - base) >= half;
    let mut lo = peak;
    while lo > 0 && above(lo - 1) {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < y.len() && above(hi + 1) {
        hi += 1;
    }
    let step = (omega[omega.len() - 1] - omega[0]).abs() / (omega.len() - 1) as f64;
    (0.5 * (omega[hi] - omega[lo]).abs()).max(step)
}

/// Local maxima of `sign·y` above `frac` of the largest excursion, by frequency.
fn peaks(omega: &[f64], y: &[f64], sign: f64, base: f64, frac: f64) -> Vec<usize> {
    let h: Vec<f64> = y.iter().map(|v| sign * (v - base)).collect();
    let top = h.iter().copied().fold(0.0, f64::max);
    let mut idx: Vec<usize> = (1..y.len().saturating_sub(1))
        .filter(|&i| h[i] > h[i - 1] && h[i] >= h[i + 1] && h[i] >= frac * top)
        .collect();
    idx.sort_by(|&a, &b| omega[a].total_cmp(&omega[b]));
    idx
}

/// Fill in scale and offset by linear least squares at the given shape parameters.
fn with_linear_terms(start: &mut [f64], prob: &FitProblem, basis: Result<Vec<f64>>, y: &[f64], scale: usize) {
    if let Ok(b) = basis {
        if let Some((a, c)) = scale_offset(&b, y) {
            if !prob.fixed[scale] {
                start[scale] = a;
            }
            if !prob.fixed[scale + 1] {
                start[scale + 1] = c;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VacuumSpectrumFit {
    pub omega_q: f64,
    pub gamma_q: f64,
    pub chi_qp: f64,
    pub nbar_p: f64,
    pub scale: f64,
    pub offset: f64,
    pub fit: FitResult,
}

fn vacuum_model(p: &[f64], kappa_p: f64) -> Result<SpectrumModel> {
    SpectrumModel::from_occupancy(p[0], p[1], p[2], kappa_p, 0.0, p[3])
}

/// Photon-ladder fit of a qubit spectrum read out on the probe resonance.
/// Parameters: `omega_q`, `gamma_q`, `chi_qp`, `nbar_p`, `scale`, `offset`.
///
/// The starting line center is the extremum of the data and the starting
/// width its half width at half maximum; χ is tried at several values of
/// either sign.
pub fn fit_qubit_spectrum_vacuum(
    omega: &[f64],
    re_dr: &[f64],
    kappa_p: f64,
    fix: &[(String, f64)],
) -> Result<VacuumSpectrumFit> {
    check_xy(omega, re_dr, 8)?;
    if !(kappa_p > 0.0) {
        return Err(Error::input(format!("probe linewidth must be > 0, got {kappa_p}")));
    }
    let (sign, base, peak) = line_shape(re_dr);
    let gamma0 = half_width(omega, re_dr, sign, base, peak);
    let predict = |p: &[f64]| -> Result<Vec<f64>> {
        let s = dispersive::spectrum(&vacuum_model(p, kappa_p)?, omega)?;
        Ok(s.total.iter().map(|v| p[4] * v + p[5]).collect())
    };
    let names = ["omega_q", "gamma_q", "chi_qp", "nbar_p", "scale", "offset"];
    let initial = vec![omega[peak], gamma0, -0.5, 0.1, sign, base];
    let prob = FitProblem::curve(&names, initial, re_dr, None, predict)
        .with_bounds(1, 1e-6, f64::INFINITY)
        .with_bounds(3, 0.0, MAX_OCCUPANCY)
        .fix_named(fix)?;
    let mut starts = Vec::new();
    for chi in [-0.5, -1.0, -0.25, 0.5, 1.0] {
        let mut s = prob.initial.clone();
        if !prob.fixed[2] {
            s[2] = chi;
        }
        let basis = vacuum_model(&s, kappa_p).and_then(|m| Ok(dispersive::spectrum(&m, omega)?.total));
        with_linear_terms(&mut s, &prob, basis, re_dr, 4);
        starts.push(s);
    }
    let fit = least_squares_multistart(&prob, &starts)?;
    let e = &fit.estimates;
    Ok(VacuumSpectrumFit {
        omega_q: e[0],
        gamma_q: e[1],
        chi_qp: e[2],
        nbar_p: e[3],
        scale: e[4],
        offset: e[5],
        fit,
    })
}

/// Constants held fixed in the qubit-magnon spectrum fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MagnonFitConstants {
    /// Qubit frequency and linewidth with the probe mode in vacuum.
    pub omega_q: f64,
    pub gamma_q: f64,
    pub gamma_m: f64,
    pub photon_weight: f64,
    pub chi_qp: f64,
    pub kappa_p: f64,
    pub probe_detuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MagnonSpectrumFit {
    pub chi_qm: f64,
    pub delta_mw: f64,
    pub nbar_m: f64,
    pub scale: f64,
    pub offset: f64,
    /// Peak spacing 2χ_q-m + Δ_mw.
    pub splitting: f64,
    pub splitting_ci: (f64, f64),
    /// Magnon number-state probabilities at the best fit.
    pub probabilities: Vec<f64>,
    /// Extremes of each probability over the corners of the 95% intervals
    /// of (n̄, χ, Δ).
    pub probability_bounds: Vec<(f64, f64)>,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

fn magnon_model(p: &[f64], c: &MagnonFitConstants) -> Result<CompositeModel> {
    let magnon = SpectrumModel::from_occupancy(c.omega_q, c.gamma_q, p[0], c.gamma_m, p[1], p[2])?;
    let m = CompositeModel {
        magnon,
        chi_qp: c.chi_qp,
        kappa_p: c.kappa_p,
        probe_detuning: c.probe_detuning,
        photon_weight: c.photon_weight,
        scale: p[3],
        offset: p[4],
    };
    m.validate()?;
    Ok(m)
}

/// Composite magnon-ladder fit with the photon peak attached.
/// Parameters: `chi_qm`, `delta_mw`, `nbar_m`, `scale`, `offset`.
///
/// Starting χ comes from the spacing of the two lowest resolved peaks,
/// split between 2χ and Δ in a few ways.
pub fn fit_qubit_spectrum_magnon(
    omega: &[f64],
    re_dr: &[f64],
    constants: &MagnonFitConstants,
    fix: &[(String, f64)],
) -> Result<MagnonSpectrumFit> {
    check_xy(omega, re_dr, 7)?;
    let c = *constants;
    let (sign, base, _) = line_shape(re_dr);
    let found = peaks(omega, re_dr, sign, base, 0.1);
    let spacing = if found.len() >= 2 { Some(omega[found[1]] - omega[found[0]]) } else { None };
    let predict = move |p: &[f64]| dispersive::composite_spectrum(&magnon_model(p, &c)?, omega);
    let names = ["chi_qm", "delta_mw", "nbar_m", "scale", "offset"];
    let prob = FitProblem::curve(&names, vec![1.0, 0.0, 1.0, sign, base], re_dr, None, predict)
        .with_bounds(2, 0.0, MAX_OCCUPANCY)
        .fix_named(fix)?;

    let mut shapes = Vec::new();
    for nbar in [1.0, 0.3, 3.0, 0.02] {
        match spacing {
            Some(s) => {
                for delta in [0.0, -0.5, 0.5] {
                    shapes.push(((s - delta) / 2.0, delta, nbar));
                }
            }
            None => {
                for chi in [0.5, 1.5] {
                    shapes.push((chi, 0.0, nbar));
                }
            }
        }
    }
    let starts: Vec<Vec<f64>> = shapes
        .iter()
        .map(|&(chi, delta, nbar)| {
            let mut s = prob.initial.clone();
            for (i, v) in [(0, chi), (1, delta), (2, nbar)] {
                if !prob.fixed[i] {
                    s[i] = v;
                }
            }
            let mut unit = s.clone();
            unit[3] = 1.0;
            unit[4] = 0.0;
            let basis = magnon_model(&unit, &c).and_then(|m| dispersive::composite_spectrum(&m, omega));
            with_linear_terms(&mut s, &prob, basis, re_dr, 3);
            s
        })
        .collect();
    let fit = least_squares_multistart(&prob, &starts)?;
    let e = fit.estimates.clone();
    let best = magnon_model(&e, &c)?;
    let probs = dispersive::composite_probabilities(&best)?;
    let mut warnings = fit.warnings.clone();
    warnings.extend(probs.warnings.iter().cloned());

    let mut bounds: Vec<(f64, f64)> = probs.probabilities.iter().map(|&p| (p, p)).collect();
    let (ci_chi, ci_delta, ci_nbar) = (fit.ci95[0], fit.ci95[1], fit.ci95[2]);
    for chi in [ci_chi.0, ci_chi.1] {
        for delta in [ci_delta.0, ci_delta.1] {
            for nbar in [ci_nbar.0, ci_nbar.1] {
                let corner = magnon_model(&[chi, delta, nbar, e[3], e[4]], &c)
                    .and_then(|m| dispersive::composite_probabilities(&m));
                match corner {
                    Ok(pc) => {
                        for (b, p) in bounds.iter_mut().zip(&pc.probabilities) {
                            b.0 = b.0.min(*p);
                            b.1 = b.1.max(*p);
                        }
                    }
                    Err(err) => warnings.push(format!("corner (χ {chi}, Δ {delta}, n̄ {nbar}) skipped: {err}")),
                }
            }
        }
    }
    let cov = &fit.covariance;
    let var = 4.0 * cov[0][0] + cov[1][1] + 4.0 * cov[0][1];
    let splitting = 2.0 * e[0] + e[1];
    let half = super::engine::Z95 * var.max(0.0).sqrt();
    Ok(MagnonSpectrumFit {
        chi_qm: e[0],
        delta_mw: e[1],
        nbar_m: e[2],
        scale: e[3],
        offset: e[4],
        splitting,
        splitting_ci: (splitting - half, splitting + half),
        probabilities: probs.probabilities,
        probability_bounds: bounds,
        fit,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BroadeningFit {
    /// (2Ω_s)²/P_s in MHz²/W.
    pub eta: f64,
    pub gamma0: f64,
    /// Lower limit 1/(2πT₁) on `gamma0`.
    pub floor: f64,
    pub at_floor: bool,
    pub fit: FitResult,
}

/// Fit γ(P) = √(ηP + γ₀²) with γ₀ ≥ 1/(2πT₁). Powers in W, `t1_us` in µs.
/// Parameters: `eta`, `gamma0`.
///
/// Starts from the straight-line fit of γ² against P.
pub fn fit_power_broadening(
    power: &[f64],
    linewidth: &[f64],
    t1_us: f64,
    fix: &[(String, f64)],
) -> Result<BroadeningFit> {
    check_xy(power, linewidth, 2)?;
    if !(t1_us > 0.0) || !t1_us.is_finite() {
        return Err(Error::input(format!("T1 must be > 0, got {t1_us}")));
    }
    if power.iter().any(|&p| p < 0.0) {
        return Err(Error::input("powers must be >= 0"));
    }
    let floor = 1.0 / (2.0 * std::f64::consts::PI * t1_us);
    let sq: Vec<f64> = linewidth.iter().map(|g| g * g).collect();
    let (eta0, c0) = scale_offset(power, &sq).unwrap_or((0.0, floor * floor));
    let initial = vec![eta0.max(0.0), c0.max(floor * floor).sqrt()];
    let prob = FitProblem::curve(&["eta", "gamma0"], initial, linewidth, None, |p| {
        Ok(power.iter().map(|&x| (p[0] * x + p[1] * p[1]).max(0.0).sqrt()).collect())
    })
    .with_bounds(0, 0.0, f64::INFINITY)
    .with_bounds(1, floor, f64::INFINITY)
    .fix_named(fix)?;
    let fit = least_squares_multistart(&prob, std::slice::from_ref(&prob.initial))?;
    let gamma0 = fit.estimates[1];
    Ok(BroadeningFit { eta: fit.estimates[0], gamma0, floor, at_floor: gamma0 <= floor, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_width_of_lorentzian() {
        let omega: Vec<f64> = (0..401).map(|i| -5.0 + 0.025 * i as f64).collect();
        let y: Vec<f64> = omega.iter().map(|w| 0.5 / (0.25 + w * w)).collect();
        let (sign, _, peak) = line_shape(&y);
        assert_eq!(sign, 1.0);
        let hw = half_width(&omega, &y, sign, 0.0, peak);
        assert!((hw - 0.5).abs() < 0.03, "{hw}");
    }

    #[test]
    fn dips_are_detected() {
        let y = [0.0, 0.0, -1.0, 0.0, 0.0, 0.1];
        assert_eq!(line_shape(&y).0, -1.0);
    }

    #[test]
    fn broadening_floor_matches_t1() {
        let p = [0.0, 1e-16, 2e-16, 4e-16];
        let g: Vec<f64> = p.iter().map(|x: &f64| (3e15 * x + 0.3f64.powi(2)).sqrt()).collect();
        let fit = fit_power_broadening(&p, &g, 0.63, &[]).unwrap();
        assert!((fit.floor - 0.2526).abs() < 1e-4);
        assert!((fit.gamma0 - 0.3).abs() < 1e-6);
        assert!(!fit.at_floor);
    }
}
