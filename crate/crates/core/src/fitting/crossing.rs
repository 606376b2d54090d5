//! Avoided-crossing and coupler-reflection fits.

use serde::Serialize;

use super::engine::{least_squares_multistart, FitProblem, FitResult};
use super::{check_xy, median};
use crate::error::{Error, Result};
use crate::io::{crossing_branch, reflection, CrossingParams, ReflectionParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingFit {
    pub params: CrossingParams,
    /// Coupler frequency bare of the magnon.
    pub coupler_freq: f64,
    pub coupling: f64,
    /// Current (mA) at which the bare lines cross.
    pub resonance_current: f64,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

/// Initial p1..p4 read off the coupler-like branch: the coupler frequency is
/// the median, the crossing sits at the largest jump across it, the largest
/// excursion approximates g, and the current offset at which the excursion
/// halves (x = 3g/4) sets the tuning rate.
fn crossing_guess(current: &[f64], freq: &[f64]) -> [f64; 4] {
    let mut pts: Vec<(f64, f64)> = current.iter().copied().zip(freq.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let wc = median(freq);
    let dev: Vec<f64> = pts.iter().map(|p| p.1 - wc).collect();

    let mut i0 = None;
    let mut jump = 0.0;
    for k in 1..pts.len() {
        if dev[k - 1].signum() != dev[k].signum() && (dev[k] - dev[k - 1]).abs() > jump {
            jump = (dev[k] - dev[k - 1]).abs();
            i0 = Some((0.5 * (pts[k - 1].0 + pts[k].0), dev[k - 1] > 0.0));
        }
    }
    let kmax = (0..pts.len()).max_by(|&a, &b| dev[a].abs().total_cmp(&dev[b].abs())).unwrap_or(0);
    let (i0, above_first) = i0.unwrap_or((pts[kmax].0, dev[kmax] > 0.0));
    let g = dev[kmax].abs().max(1e-3);
    let span = (pts[pts.len() - 1].0 - pts[0].0).max(1e-9);
    let di = pts
        .iter()
        .zip(&dev)
        .filter(|(_, d)| d.abs() <= g / 2.0)
        .map(|(p, _)| (p.0 - i0).abs())
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mag = if di.is_finite() { 0.75 * g / di } else { g / span };
    // Coupler-like branch above the coupler below I_0 means the magnon rises through it.
    let p1 = if above_first { mag } else { -mag };
    let p3 = p1 * i0;
    [p1, wc - p3, p3, g]
}

/// Fit the coupler-like branch ω_c^g(I) of the avoided crossing.
/// Parameters: `p1`, `p2`, `p3`, `p4`.
pub fn fit_crossing(current: &[f64], freq: &[f64], fix: &[(String, f64)]) -> Result<CrossingFit> {
    check_xy(current, freq, 4)?;
    let guess = crossing_guess(current, freq);
    let prob = FitProblem::curve(&["p1", "p2", "p3", "p4"], guess.to_vec(), freq, None, |p| {
        let cp = CrossingParams { p1: p[0], p2: p[1], p3: p[2], p4: p[3] };
        Ok(current.iter().map(|&i| crossing_branch(i, &cp)).collect())
    })
    .with_bounds(3, 0.0, f64::INFINITY)
    .fix_named(fix)?;
    let starts: Vec<Vec<f64>> = [1.0, 0.5, 2.0, 0.25, 4.0]
        .iter()
        .map(|f| {
            let p1 = if prob.fixed[0] { prob.initial[0] } else { guess[0] * f };
            let p3 = if prob.fixed[2] { prob.initial[2] } else { p1 * guess[2] / guess[0] };
            let p2 = if prob.fixed[1] { prob.initial[1] } else { guess[1] + guess[2] - p3 };
            vec![p1, p2, p3, prob.initial[3]]
        })
        .collect();
    let fit = least_squares_multistart(&prob, &starts)?;
    let e = &fit.estimates;
    let params = CrossingParams { p1: e[0], p2: e[1], p3: e[2], p4: e[3] };
    let mut warnings = fit.warnings.clone();
    if params.p1 != 0.0 {
        let i0 = params.resonance_current();
        let below = current.iter().filter(|&&i| i < i0).count();
        if below == 0 || below == current.len() {
            warnings.push("all currents lie on one side of the crossing; p1..p3 are ill-conditioned".into());
        }
    }
    Ok(CrossingFit {
        coupler_freq: params.coupler_freq(),
        coupling: params.coupling(),
        resonance_current: if params.p1 != 0.0 { params.resonance_current() } else { f64::NAN },
        params,
        fit,
        warnings,
    })
}

/// Re(r) versus readout frequency at one coil current.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectionSpectrum {
    pub current: f64,
    pub omega: Vec<f64>,
    pub re_r: Vec<f64>,
}

/// Coupler constants held fixed in the global reflection fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplerConstants {
    pub coupler_freq: f64,
    pub kappa_int: f64,
    pub kappa_cpl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectionFit {
    pub gamma_m: f64,
    pub coupling: f64,
    pub currents: Vec<f64>,
    /// Magnon frequency bare of the coupler, per current.
    pub magnon_freqs: Vec<f64>,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

/// Starting values for [`fit_reflection_global`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionGuess {
    pub gamma_m: f64,
    pub coupling: f64,
    pub magnon_freqs: Vec<f64>,
}

fn local_minima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(2), (i + 3).min(n));
            y[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect();
    let mut idx: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| smooth[i] < smooth[i - 1] && smooth[i] <= smooth[i + 1])
        .collect();
    idx.sort_by(|&a, &b| smooth[a].total_cmp(&smooth[b]));
    idx
}

/// The two deepest dips of a spectrum are the hybrid modes; their sum and
/// product around the coupler give the magnon frequency and g².
fn reflection_guess(spectra: &[ReflectionSpectrum], cc: &CouplerConstants) -> ReflectionGuess {
    let mut couplings = Vec::new();
    let magnon_freqs = spectra
        .iter()
        .map(|s| {
            let minima = local_minima(&s.re_r);
            let width = (s.omega[s.omega.len() - 1] - s.omega[0]).abs();
            let first = minima.first().map(|&i| s.omega[i]).unwrap_or(cc.coupler_freq);
            let second = minima.iter().map(|&i| s.omega[i]).find(|w| (w - first).abs() > 0.02 * width);
            match second {
                Some(second) => {
                    let g2 = -(first - cc.coupler_freq) * (second - cc.coupler_freq);
                    if g2 > 0.0 {
                        couplings.push(g2.sqrt());
                    }
                    first + second - cc.coupler_freq
                }
                // Lone dip: the magnon sits outside the window.
                None => first + width,
            }
        })
        .collect();
    let coupling = if couplings.is_empty() { 10.0 } else { median(&couplings) };
    ReflectionGuess { gamma_m: 1.0, coupling, magnon_freqs }
}

/// Joint fit of reflection spectra at several currents: γ_m and g are
/// shared, the bare magnon frequency is fitted per current.
/// Parameters: `gamma_m`, `coupling`, `magnon_freq_0`, `magnon_freq_1`, ...
pub fn fit_reflection_global(
    spectra: &[ReflectionSpectrum],
    constants: &CouplerConstants,
    guess: Option<&ReflectionGuess>,
    fix: &[(String, f64)],
) -> Result<ReflectionFit> {
    if spectra.is_empty() {
        return Err(Error::input("reflection fit needs at least one spectrum"));
    }
    for s in spectra {
        check_xy(&s.omega, &s.re_r, 3)?;
    }
    ReflectionParams {
        coupler_freq: constants.coupler_freq,
        kappa_int: constants.kappa_int,
        kappa_cpl: constants.kappa_cpl,
        coupling: 0.0,
        gamma_m: 0.0,
        magnon_freq: 0.0,
    }
    .validate()?;
    let guess = match guess {
        Some(g) if g.magnon_freqs.len() == spectra.len() => g.clone(),
        Some(_) => return Err(Error::input("guess needs one magnon frequency per spectrum")),
        None => reflection_guess(spectra, constants),
    };
    let mut names = vec!["gamma_m".to_string(), "coupling".to_string()];
    names.extend((0..spectra.len()).map(|k| format!("magnon_freq_{k}")));
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut initial = vec![guess.gamma_m, guess.coupling];
    initial.extend(&guess.magnon_freqs);
    let y: Vec<f64> = spectra.iter().flat_map(|s| s.re_r.iter().copied()).collect();
    let cc = *constants;
    let prob = FitProblem::curve(&name_refs, initial.clone(), &y, None, move |p| {
        let mut out = Vec::new();
        for (k, s) in spectra.iter().enumerate() {
            let rp = ReflectionParams {
                coupler_freq: cc.coupler_freq,
                kappa_int: cc.kappa_int,
                kappa_cpl: cc.kappa_cpl,
                coupling: p[1],
                gamma_m: p[0],
                magnon_freq: p[2 + k],
            };
            out.extend(s.omega.iter().map(|&w| reflection(w, &rp).re));
        }
        Ok(out)
    })
    .with_bounds(0, 1e-6, f64::INFINITY)
    .with_bounds(1, 0.0, f64::INFINITY)
    .fix_named(fix)?;
    let starts: Vec<Vec<f64>> = [1.0, 0.3, 3.0]
        .iter()
        .map(|f| {
            let mut s = prob.initial.clone();
            if !prob.fixed[0] {
                s[0] = guess.gamma_m * f;
            }
            s
        })
        .collect();
    let fit = least_squares_multistart(&prob, &starts)?;
    let mut warnings = fit.warnings.clone();
    if spectra.len() < 2 {
        warnings.push("a single spectrum constrains γ_m and g only weakly".into());
    }
    Ok(ReflectionFit {
        gamma_m: fit.estimates[0],
        coupling: fit.estimates[1],
        currents: spectra.iter().map(|s| s.current).collect(),
        magnon_freqs: fit.estimates[2..].to_vec(),
        fit,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guess_finds_crossing_geometry() {
        let p = CrossingParams::from_physical(8456.0, 22.5, 5.5, 47.6).unwrap();
        let current: Vec<f64> = (0..40).map(|k| 4.0 + 0.0771 * k as f64).collect();
        let freq: Vec<f64> = current.iter().map(|&i| crossing_branch(i, &p)).collect();
        let g = crossing_guess(&current, &freq);
        assert!(g[0] > 0.0);
        assert!((g[2] / g[0] - 5.5).abs() < 0.1);
        assert!((g[3] - 22.5).abs() < 5.0);
    }

    #[test]
    fn minima_sorted_by_depth() {
        let y: Vec<f64> = (0..200)
            .map(|i| {
                let x = i as f64;
                1.0 - 0.3 / (1.0 + ((x - 50.0) / 5.0).powi(2)) - 0.6 / (1.0 + ((x - 140.0) / 5.0).powi(2))
            })
            .collect();
        let m = local_minima(&y);
        assert_eq!(&m[..2], &[140, 50]);
    }
}
