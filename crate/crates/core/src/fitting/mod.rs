//! Nonlinear least squares and the model fits built on it.
//!
//! Every adapter takes a list of `(name, value)` pairs that pins parameters
//! by name; pinned parameters come back unchanged.

mod crossing;
pub mod engine;
mod linear;
mod spectra;

pub use crossing::{
    fit_crossing, fit_reflection_global, CouplerConstants, CrossingFit, ReflectionFit, ReflectionGuess,
    ReflectionSpectrum,
};
pub use engine::{least_squares, least_squares_from, least_squares_multistart, FitOptions, FitProblem, FitResult};
pub use linear::{fit_linear, LinearFit};
pub use spectra::{
    fit_power_broadening, fit_qubit_spectrum_magnon, fit_qubit_spectrum_vacuum, BroadeningFit,
    MagnonFitConstants, MagnonSpectrumFit, VacuumSpectrumFit,
};

use crate::error::{Error, Result};

fn check_xy(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::input(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::input(format!("need at least {min} data points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::input("data contain non-finite values"));
    }
    Ok(())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Least-squares a, c in y ≈ a·b + c.
fn scale_offset(b: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = b.len() as f64;
    let (mb, my) = (b.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sbb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
    if !(sbb > 0.0) {
        return None;
    }
    let a = b.iter().zip(y).map(|(b, y)| (b - mb) * (y - my)).sum::<f64>() / sbb;
    Some((a, my - a * mb))
}
