//! Ordinary least-squares lines.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use super::check_xy;
use super::engine::{FitResult, Z95};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Parameters `slope`, `intercept`; the intercept is fixed at 0 for
    /// lines through the origin.
    pub fit: FitResult,
}

/// Closed-form fit of y = a·x + b, or y = a·x when `zero_intercept`.
pub fn fit_linear(x: &[f64], y: &[f64], zero_intercept: bool) -> Result<LinearFit> {
    check_xy(x, y, if zero_intercept { 1 } else { 2 })?;
    let n = x.len();
    let k = if zero_intercept { 1 } else { 2 };
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let (slope, intercept, inv) = if zero_intercept {
        if !(sxx > 0.0) {
            return Err(Error::input("all x are zero"));
        }
        let a = x.iter().zip(y).map(|(x, y)| x * y).sum::<f64>() / sxx;
        (a, 0.0, Matrix2::new(1.0 / sxx, 0.0, 0.0, 0.0))
    } else {
        let sx: f64 = x.iter().sum();
        let normal = Matrix2::new(sxx, sx, sx, n as f64);
        let inv = normal.try_inverse().filter(|m| m.iter().all(|v| v.is_finite()));
        let Some(inv) = inv.filter(|_| x.iter().any(|&v| v != x[0])) else {
            return Err(Error::input("all x are equal; slope is undefined"));
        };
        let rhs = Vector2::new(x.iter().zip(y).map(|(x, y)| x * y).sum(), y.iter().sum());
        let p = inv * rhs;
        (p[0], p[1], inv)
    };
    let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let dof = n - k;
    let mut warnings = Vec::new();
    let s2 = if dof > 0 {
        rss / dof as f64
    } else {
        warnings.push("no residual degrees of freedom; uncertainties are zero".into());
        0.0
    };
    let cov = inv * s2;
    let covariance = vec![vec![cov[(0, 0)], cov[(0, 1)]], vec![cov[(1, 0)], cov[(1, 1)]]];
    let std_errors = vec![cov[(0, 0)].max(0.0).sqrt(), cov[(1, 1)].max(0.0).sqrt()];
    let est = vec![slope, intercept];
    let ci95 = est.iter().zip(&std_errors).map(|(p, s)| (p - Z95 * s, p + Z95 * s)).collect();
    Ok(LinearFit {
        slope,
        intercept,
        fit: FitResult {
            names: vec!["slope".into(), "intercept".into()],
            estimates: est,
            std_errors,
            ci95,
            covariance,
            fixed: vec![false, zero_intercept],
            rss,
            n_data: n,
            dof,
            iterations: 0,
            converged: true,
            gradient_norm: 0.0,
            singular: false,
            warnings,
        },
    })
}
