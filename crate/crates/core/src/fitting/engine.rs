//! Bounded Levenberg-Marquardt on central-difference Jacobians.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Two-sided 95% quantile of the standard normal.
pub const Z95: f64 = 1.96;

pub type ResidualFn<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative reduction of the residual sum of squares.
    pub ftol: f64,
    /// Relative step size.
    pub xtol: f64,
    /// Scaled gradient for early termination.
    pub gtol: f64,
    /// Scaled gradient a terminated fit must reach to count as converged.
    pub gtol_accept: f64,
    pub initial_lambda: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-12,
            xtol: 1e-12,
            gtol: 1e-10,
            gtol_accept: 1e-4,
            initial_lambda: 1e-3,
        }
    }
}

/// A least-squares problem: minimize Σ rᵢ(p)² within per-parameter bounds,
/// holding masked parameters at their initial values.
pub struct FitProblem<'a> {
    pub names: Vec<String>,
    pub initial: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fixed: Vec<bool>,
    pub options: FitOptions,
    residuals: Box<ResidualFn<'a>>,
}

impl<'a> FitProblem<'a> {
    pub fn new(
        names: &[&str],
        initial: Vec<f64>,
        residuals: impl Fn(&[f64]) -> Result<Vec<f64>> + 'a,
    ) -> Self {
        let k = initial.len();
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            initial,
            lower: vec![f64::NEG_INFINITY; k],
            upper: vec![f64::INFINITY; k],
            fixed: vec![false; k],
            options: FitOptions::default(),
            residuals: Box::new(residuals),
        }
    }

    /// Curve fit: residuals (y − f(p))/σ, with `predict` returning f at every data point.
    pub fn curve(
        names: &[&str],
        initial: Vec<f64>,
        y: &'a [f64],
        sigma: Option<&'a [f64]>,
        predict: impl Fn(&[f64]) -> Result<Vec<f64>> + 'a,
    ) -> Self {
        Self::new(names, initial, move |p| {
            let f = predict(p)?;
            if f.len() != y.len() {
                return Err(Error::input(format!("model gave {} values for {} data points", f.len(), y.len())));
            }
            Ok(match sigma {
                Some(s) => f.iter().zip(y).zip(s).map(|((f, y), s)| (y - f) / s).collect(),
                None => f.iter().zip(y).map(|(f, y)| y - f).collect(),
            })
        })
    }

    pub fn with_bounds(mut self, i: usize, lower: f64, upper: f64) -> Self {
        self.lower[i] = lower;
        self.upper[i] = upper;
        self
    }

    pub fn with_fixed(mut self, i: usize) -> Self {
        self.fixed[i] = true;
        self
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Fix parameters by name at the given values.
    pub fn fix_named(mut self, fix: &[(String, f64)]) -> Result<Self> {
        for (name, v) in fix {
            let i = self
                .index_of(name)
                .ok_or_else(|| Error::input(format!("unknown fit parameter `{name}`; expected one of {:?}", self.names)))?;
            self.initial[i] = *v;
            self.fixed[i] = true;
        }
        Ok(self)
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<Vec<f64>> {
        (self.residuals)(p)
    }

    fn free(&self) -> Vec<usize> {
        (0..self.initial.len()).filter(|&i| !self.fixed[i]).collect()
    }

    fn validate(&self, start: &[f64]) -> Result<()> {
        let k = self.initial.len();
        if self.names.len() != k || self.lower.len() != k || self.upper.len() != k || self.fixed.len() != k || start.len() != k {
            return Err(Error::input("parameter names, bounds, mask and start must have equal length"));
        }
        for i in 0..k {
            if !start[i].is_finite() {
                return Err(Error::input(format!("initial `{}` is not finite", self.names[i])));
            }
            if !(self.lower[i] <= self.upper[i]) {
                return Err(Error::input(format!("empty bounds for `{}`", self.names[i])));
            }
            if !self.fixed[i] && (start[i] < self.lower[i] || start[i] > self.upper[i]) {
                return Err(Error::input(format!(
                    "initial `{}` = {} lies outside [{}, {}]",
                    self.names[i], start[i], self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// 95% interval per parameter, clipped to the bounds.
    pub ci95: Vec<(f64, f64)>,
    pub covariance: Vec<Vec<f64>>,
    pub fixed: Vec<bool>,
    pub rss: f64,
    pub n_data: usize,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
    /// max_j |(Jᵀr)_j| / (‖J_j‖‖r‖) over free parameters not pinned by a bound,
    /// with ‖r‖ floored at 1e-8 of its initial value.
    pub gradient_norm: f64,
    /// JᵀJ was singular and the covariance is a pseudo-inverse.
    pub singular: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.estimates[i])
    }

    pub fn index(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).expect("parameter name")
    }

    pub fn std_error(&self, name: &str) -> f64 {
        self.std_errors[self.index(name)]
    }

    pub fn interval(&self, name: &str) -> (f64, f64) {
        self.ci95[self.index(name)]
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn checked(r: Result<Vec<f64>>, n: usize) -> Result<Vec<f64>> {
    let r = r?;
    if r.len() != n {
        return Err(Error::numerical(format!("residual count changed from {n} to {}", r.len())));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("non-finite residual"));
    }
    Ok(r)
}

/// Central differences with step max(1e-6|p|, 1e-9), one-sided next to a bound.
fn jacobian(prob: &FitProblem, p: &[f64], free: &[usize], m: usize) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(m, free.len());
    let mut q = p.to_vec();
    for (col, &i) in free.iter().enumerate() {
        let h = (1e-6 * p[i].abs()).max(1e-9);
        let (lo, hi) = (prob.lower[i], prob.upper[i]);
        let (a, b) = if p[i] + h > hi {
            (p[i] - h, p[i])
        } else if p[i] - h < lo {
            (p[i], p[i] + h)
        } else {
            (p[i] - h, p[i] + h)
        };
        q[i] = a;
        let ra = checked(prob.evaluate(&q), m)?;
        q[i] = b;
        let rb = checked(prob.evaluate(&q), m)?;
        q[i] = p[i];
        for row in 0..m {
            jac[(row, col)] = (rb[row] - ra[row]) / (b - a);
        }
    }
    Ok(jac)
}

/// `floor` bounds ‖r‖ from below so that roundoff-level residuals of an
/// exact fit do not masquerade as a steep gradient.
fn gradient_norm(prob: &FitProblem, p: &[f64], free: &[usize], jac: &DMatrix<f64>, r: &DVector<f64>, floor: f64) -> f64 {
    let rn = r.norm().max(floor);
    if rn == 0.0 {
        return 0.0;
    }
    let g = jac.transpose() * r;
    let mut worst: f64 = 0.0;
    for (col, &i) in free.iter().enumerate() {
        let cn = jac.column(col).norm();
        if cn == 0.0 {
            continue;
        }
        // Descent direction is −g; a bound that blocks it pins the parameter.
        if (p[i] <= prob.lower[i] && g[col] > 0.0) || (p[i] >= prob.upper[i] && g[col] < 0.0) {
            continue;
        }
        worst = worst.max(g[col].abs() / (cn * rn));
    }
    worst
}

/// Covariance of the free parameters from a column-scaled SVD of J.
fn covariance(jac: &DMatrix<f64>, s2: f64) -> (DMatrix<f64>, bool) {
    let k = jac.ncols();
    let scale: Vec<f64> = (0..k).map(|c| jac.column(c).norm()).collect();
    let mut js = jac.clone();
    for c in 0..k {
        if scale[c] > 0.0 {
            js.column_mut(c).scale_mut(1.0 / scale[c]);
        }
    }
    let svd = js.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax;
    let mut singular = scale.contains(&0.0);
    let mut inner = DMatrix::zeros(k, k);
    for (idx, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            singular = true;
            continue;
        }
        let v = v_t.row(idx).transpose();
        inner += &v * v.transpose() / (s * s);
    }
    let mut cov = inner * s2;
    for a in 0..k {
        for b in 0..k {
            let d = scale[a] * scale[b];
            cov[(a, b)] = if d > 0.0 { cov[(a, b)] / d } else { 0.0 };
        }
    }
    (cov, singular)
}

pub fn least_squares(prob: &FitProblem) -> Result<FitResult> {
    least_squares_from(prob, &prob.initial)
}

/// Run from `start`; fixed parameters keep their values in `prob.initial`.
pub fn least_squares_from(prob: &FitProblem, start: &[f64]) -> Result<FitResult> {
    prob.validate(start)?;
    let k = start.len();
    let free = prob.free();
    let mut p: Vec<f64> = (0..k).map(|i| if prob.fixed[i] { prob.initial[i] } else { start[i] }).collect();
    let r0 = prob
        .evaluate(&p)
        .map_err(|e| Error::input(format!("residuals fail at the initial guess: {e}")))?;
    let m = r0.len();
    if r0.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("residuals are not finite at the initial guess"));
    }
    if free.len() > m {
        return Err(Error::input(format!("{} free parameters but only {m} data points", free.len())));
    }
    let opts = prob.options;
    let mut r = DVector::from_vec(r0);
    let mut rss = r.norm_squared();
    let floor = 1e-8 * rss.sqrt();
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut stopped = free.is_empty() || rss == 0.0;
    let mut warnings = Vec::new();

    while !stopped && iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(prob, &p, &free, m)?;
        if gradient_norm(prob, &p, &free, &jac, &r, floor) <= opts.gtol {
            stopped = true;
            break;
        }
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        loop {
            let mut damped = a.clone();
            for d in 0..free.len() {
                damped[(d, d)] += lambda * a[(d, d)].max(1e-300);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    stopped = true;
                    break;
                }
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut trial = p.clone();
            for (col, &i) in free.iter().enumerate() {
                trial[i] = (p[i] + delta[col]).clamp(prob.lower[i], prob.upper[i]);
            }
            let step: f64 = free.iter().map(|&i| (trial[i] - p[i]).powi(2)).sum::<f64>().sqrt();
            let size: f64 = free.iter().map(|&i| p[i] * p[i]).sum::<f64>().sqrt();
            if step <= opts.xtol * (size + opts.xtol) {
                stopped = true;
                break;
            }
            let accepted = match checked(prob.evaluate(&trial), m) {
                Ok(rt) => {
                    let rss_t = sum_sq(&rt);
                    if rss_t < rss {
                        let rel = (rss - rss_t) / rss;
                        p = trial;
                        r = DVector::from_vec(rt);
                        rss = rss_t;
                        lambda = (lambda / 10.0).max(1e-15);
                        if rel <= opts.ftol || rss == 0.0 {
                            stopped = true;
                        }
                        true
                    } else {
                        false
                    }
                }
                Err(_) => false,
            };
            if accepted {
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                stopped = true;
                break;
            }
        }
    }

    let (jac, gnorm) = if free.is_empty() {
        (DMatrix::zeros(m, 0), 0.0)
    } else {
        let jac = jacobian(prob, &p, &free, m)?;
        let gn = gradient_norm(prob, &p, &free, &jac, &r, floor);
        (jac, gn)
    };
    let converged = stopped && gnorm <= opts.gtol_accept;
    if !stopped {
        warnings.push(format!("no convergence after {iterations} iterations; returning best point"));
    } else if !converged {
        warnings.push(format!("fit stalled with scaled gradient {gnorm:.2e}"));
    }

    let dof = m - free.len();
    let s2 = if dof > 0 {
        rss / dof as f64
    } else {
        if !free.is_empty() {
            warnings.push("no residual degrees of freedom; uncertainties are zero".into());
        }
        0.0
    };
    let (cov_free, singular) = if free.is_empty() { (DMatrix::zeros(0, 0), false) } else { covariance(&jac, s2) };
    if singular {
        warnings.push("JᵀJ is singular; covariance from the pseudo-inverse".into());
    }
    let mut covariance = vec![vec![0.0; k]; k];
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            covariance[i][j] = cov_free[(a, b)];
        }
    }
    let std_errors: Vec<f64> = (0..k).map(|i| covariance[i][i].max(0.0).sqrt()).collect();
    let ci95 = (0..k)
        .map(|i| {
            let half = Z95 * std_errors[i];
            ((p[i] - half).max(prob.lower[i]), (p[i] + half).min(prob.upper[i]))
        })
        .collect();
    Ok(FitResult {
        names: prob.names.clone(),
        estimates: p,
        std_errors,
        ci95,
        covariance,
        fixed: prob.fixed.clone(),
        rss,
        n_data: m,
        dof,
        iterations,
        converged,
        gradient_norm: gnorm,
        singular,
        warnings,
    })
}

/// Best of several starts by residual sum of squares, preferring converged fits.
pub fn least_squares_multistart(prob: &FitProblem, starts: &[Vec<f64>]) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for s in starts {
        match least_squares_from(prob, s) {
            Ok(fit) => {
                let better = match &best {
                    None => true,
                    Some(b) => (fit.converged, -fit.rss) > (b.converged, -b.rss),
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::input("no starting points given")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_zero_rss() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.0 * x - 2.0).collect();
        let prob = FitProblem::curve(&["a", "b"], vec![1.0, 1.0], &y, None, |p| {
            Ok(x.iter().map(|x| p[0] * x + p[1]).collect())
        });
        let fit = least_squares(&prob).unwrap();
        assert!(fit.converged);
        assert!((fit.estimates[0] - 3.0).abs() < 1e-9);
        assert!((fit.estimates[1] + 2.0).abs() < 1e-9);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn rosenbrock_valley() {
        let prob = FitProblem::new(&["x", "y"], vec![-1.2, 1.0], |p| Ok(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]));
        let fit = least_squares(&prob).unwrap();
        assert!(fit.converged, "{:?}", fit.warnings);
        assert!((fit.estimates[0] - 1.0).abs() < 1e-8);
        assert!((fit.estimates[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fixed_parameters_are_untouched() {
        let y = vec![1.0, 2.0, 3.0, 4.5];
        let c = 0.1f64.sqrt();
        let prob = FitProblem::curve(&["a", "b"], vec![1.0, c], &y, None, |p| {
            Ok((0..4).map(|i| p[0] * i as f64 + p[1]).collect())
        })
        .with_fixed(1);
        let fit = least_squares(&prob).unwrap();
        assert_eq!(fit.estimates[1].to_bits(), c.to_bits());
        assert_eq!(fit.std_errors[1], 0.0);
    }

    #[test]
    fn active_bound_gives_one_sided_interval() {
        let y = vec![0.0, -1.0, -2.0, -2.9];
        let prob = FitProblem::curve(&["a"], vec![1.0], &y, None, |p| Ok((0..4).map(|i| p[0] * i as f64).collect()))
            .with_bounds(0, 0.5, 10.0);
        let fit = least_squares(&prob).unwrap();
        assert_eq!(fit.estimates[0], 0.5);
        assert!(fit.converged);
        assert_eq!(fit.ci95[0].0, 0.5);
        assert!(fit.ci95[0].1 > 0.5);
    }

    #[test]
    fn redundant_parameters_are_flagged() {
        let y = vec![1.0, 2.0, 3.0];
        let prob = FitProblem::curve(&["a", "b"], vec![0.1, 0.2], &y, None, |p| {
            Ok((1..=3).map(|i| (p[0] + p[1]) * i as f64).collect())
        });
        let fit = least_squares(&prob).unwrap();
        assert!(fit.singular);
        assert!((fit.estimates[0] + fit.estimates[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_underdetermined_and_bad_starts() {
        let y = vec![1.0];
        let prob = FitProblem::curve(&["a", "b"], vec![0.0, 0.0], &y, None, |p| Ok(vec![p[0] + p[1]]));
        assert!(matches!(least_squares(&prob), Err(Error::InvalidInput(_))));
        let prob = FitProblem::new(&["a"], vec![f64::NAN], |p| Ok(vec![p[0]]));
        assert!(least_squares(&prob).is_err());
        let prob = FitProblem::new(&["a"], vec![1.0], |_| Ok(vec![f64::INFINITY]));
        assert!(least_squares(&prob).is_err());
    }

    #[test]
    fn unknown_fix_name_is_rejected() {
        let prob = FitProblem::new(&["a"], vec![1.0], |p| Ok(vec![p[0]]));
        assert!(prob.fix_named(&[("b".into(), 1.0)]).is_err());
    }
}
