//! Steady state of the driven, damped Kerr oscillator and the Kerr-coefficient
//! fit against occupancy-versus-power data.
//!
//! Density matrices are vectorized by stacking columns: element `(i, j)` of
//! an `N×N` matrix lives at index `i + N·j`, so `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.
//! Frequencies enter in MHz and are multiplied by 2π inside the Liouvillian.

use std::collections::HashMap;
use std::f64::consts::PI;

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::linalg::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, CMatrix, C64};

pub const DEFAULT_FOCK_DIM: usize = 30;
pub const MAX_FOCK_DIM: usize = 80;
pub const MIN_FOCK_DIM: usize = 5;
/// Population of the top two Fock levels above which the truncation is raised.
pub const LEAKAGE_TOL: f64 = 1e-6;
/// Required `‖ℒρ‖ / ‖ℒ‖` after a solve.
pub const RESIDUAL_TOL: f64 = 1e-8;
const FOCK_STEP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrModel {
    /// Drive detuning Δ_mw = ω_m^g − ω_mw.
    pub delta_mw: f64,
    /// Kerr coefficient K_m.
    pub kerr: f64,
    /// Drive strength Ω_mw.
    pub drive: f64,
    pub gamma_m: f64,
    pub fock_dim: usize,
}

impl KerrModel {
    pub fn new(delta_mw: f64, kerr: f64, drive: f64, gamma_m: f64) -> Self {
        Self { delta_mw, kerr, drive, gamma_m, fock_dim: DEFAULT_FOCK_DIM }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_m > 0.0) || !self.gamma_m.is_finite() {
            return Err(Error::input(format!("magnon linewidth must be > 0, got {}", self.gamma_m)));
        }
        if self.fock_dim < MIN_FOCK_DIM {
            return Err(Error::input(format!(
                "Fock truncation must be at least {MIN_FOCK_DIM}, got {}",
                self.fock_dim
            )));
        }
        for (name, v) in [("delta_mw", self.delta_mw), ("kerr", self.kerr), ("drive", self.drive)] {
            if !v.is_finite() {
                return Err(Error::input(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// H/ħ in rad/µs: (Δ + K/2)n − (K/2)n² + Ω(c + c†).
    pub fn hamiltonian(&self) -> CMatrix {
        let n = self.fock_dim;
        let w = 2.0 * PI;
        let mut h = CMatrix::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            h[(k, k)] = C64::new(w * ((self.delta_mw + self.kerr / 2.0) * kf - self.kerr / 2.0 * kf * kf), 0.0);
            if k + 1 < n {
                let off = C64::new(w * self.drive * ((k + 1) as f64).sqrt(), 0.0);
                h[(k, k + 1)] = off;
                h[(k + 1, k)] = off;
            }
        }
        h
    }
}

fn nonzeros(m: &CMatrix) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != C64::new(0.0, 0.0) {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

/// Nonzero entries of ℒ for Hamiltonian `h` and jump operators `(rate, c)`,
/// with duplicates already summed.
pub fn lindblad_triplets(h: &CMatrix, jumps: &[(f64, &CMatrix)]) -> Vec<(usize, usize, C64)> {
    let n = h.nrows();
    let idx = |i: usize, j: usize| i + n * j;
    let mut acc: HashMap<(usize, usize), C64> = HashMap::new();
    let mut add = |r: usize, c: usize, v: C64| *acc.entry((r, c)).or_insert(C64::new(0.0, 0.0)) += v;
    let i_unit = C64::new(0.0, 1.0);

    for (a, b, v) in nonzeros(h) {
        for k in 0..n {
            // −i Hρ: (a,k) <- (b,k);  +i ρH: (k,b) <- (k,a)
            add(idx(a, k), idx(b, k), -i_unit * v);
            add(idx(k, b), idx(k, a), i_unit * v);
        }
    }
    for &(rate, c) in jumps {
        let cz = nonzeros(c);
        for &(i, a, x) in &cz {
            for &(j, b, y) in &cz {
                add(idx(i, j), idx(a, b), rate * x * y.conj());
            }
        }
        let m = c.adjoint() * c;
        for (a, b, v) in nonzeros(&m) {
            for k in 0..n {
                add(idx(a, k), idx(b, k), -0.5 * rate * v);
                add(idx(k, b), idx(k, a), -0.5 * rate * v);
            }
        }
    }
    let mut out: Vec<(usize, usize, C64)> = acc.into_iter().map(|((r, c), v)| (r, c, v)).collect();
    out.sort_by_key(|&(r, c, _)| (c, r));
    out
}

/// Liouvillian entries of a Kerr model.
pub fn liouvillian_triplets(m: &KerrModel) -> Result<Vec<(usize, usize, C64)>> {
    m.validate()?;
    let c = fock::ladder(m.fock_dim);
    Ok(lindblad_triplets(&m.hamiltonian(), &[(2.0 * PI * m.gamma_m, &c)]))
}

/// Dense ℒ, of size fock_dim² squared. Intended for small truncations.
pub fn build_liouvillian(m: &KerrModel) -> Result<CMatrix> {
    let n2 = m.fock_dim * m.fock_dim;
    let mut l = CMatrix::zeros(n2, n2);
    for (r, c, v) in liouvillian_triplets(m)? {
        l[(r, c)] += v;
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState {
    #[serde(skip)]
    pub rho: CMatrix,
    pub occupancy: f64,
    /// ‖ℒρ‖₂.
    pub residual: f64,
    /// ‖ℒ‖_F, the scale of `residual`.
    pub liouvillian_norm: f64,
    pub fock_dim: usize,
    /// Population of the top two Fock levels.
    pub leakage: f64,
    pub warnings: Vec<String>,
}

impl SteadyState {
    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        fock::max_abs(&(&self.rho - self.rho.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.min()
    }

    /// Fock-state populations ρ_nn.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.rho.nrows()).map(|k| self.rho[(k, k)].re).collect()
    }
}

/// Solve at exactly `m.fock_dim`, without raising the truncation.
pub fn steady_state_fixed(m: &KerrModel) -> Result<SteadyState> {
    let triplets = liouvillian_triplets(m)?;
    let n = m.fock_dim;
    let n2 = n * n;

    // The ρ_00 equation is redundant with the others; trade it for Tr ρ = 1.
    let mut system: Vec<Triplet<usize, usize, C64>> = triplets
        .iter()
        .filter(|t| t.0 != 0)
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    system.extend((0..n).map(|k| Triplet::new(0, k + n * k, C64::new(1.0, 0.0))));
    let a = SparseColMat::<usize, C64>::try_new_from_triplets(n2, n2, &system)
        .map_err(|e| Error::numerical(format!("could not assemble Liouvillian: {e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| Error::numerical(format!("steady-state system is singular: {e:?}")))?;
    let mut rhs = Mat::<C64>::zeros(n2, 1);
    rhs[(0, 0)] = C64::new(1.0, 0.0);
    let x = lu.solve(&rhs);

    let mut rho = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            rho[(i, j)] = x[(i + n * j, 0)];
        }
    }
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("steady-state solve produced non-finite values"));
    }

    let mut lrho = vec![C64::new(0.0, 0.0); n2];
    let mut norm2 = 0.0;
    for &(r, c, v) in &triplets {
        lrho[r] += v * x[(c, 0)];
        norm2 += v.norm_sqr();
    }
    let residual = lrho.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let liouvillian_norm = norm2.sqrt();
    if residual > RESIDUAL_TOL * liouvillian_norm {
        return Err(Error::numerical(format!(
            "steady-state residual {residual:.3e} exceeds {RESIDUAL_TOL:e}·‖ℒ‖ = {:.3e}",
            RESIDUAL_TOL * liouvillian_norm
        )));
    }

    let occupancy = (0..n).map(|k| k as f64 * rho[(k, k)].re).sum();
    let leakage = rho[(n - 1, n - 1)].re + rho[(n - 2, n - 2)].re;
    let mut warnings = Vec::new();
    if leakage > LEAKAGE_TOL {
        warnings.push(format!(
            "top two of {n} Fock levels hold population {leakage:.3e}; truncation too small"
        ));
    }
    Ok(SteadyState { rho, occupancy, residual, liouvillian_norm, fock_dim: n, leakage, warnings })
}

/// Steady state, raising the Fock truncation in steps of 10 up to
/// [`MAX_FOCK_DIM`] while the top levels stay populated.
pub fn steady_state(m: &KerrModel) -> Result<SteadyState> {
    let mut model = *m;
    loop {
        let ss = steady_state_fixed(&model)?;
        if ss.leakage <= LEAKAGE_TOL || model.fock_dim >= MAX_FOCK_DIM {
            return Ok(ss);
        }
        model.fock_dim = (model.fock_dim + FOCK_STEP).min(MAX_FOCK_DIM);
    }
}

/// Occupancy surface over Kerr coefficients and drive strengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KerrSweep {
    pub gamma_m: f64,
    pub delta_mw: f64,
    pub kerr: Vec<f64>,
    /// Drive strengths Ω.
    pub drive: Vec<f64>,
    /// `occupancy[k][i]` at `kerr[k]`, `drive[i]`.
    pub occupancy: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

pub fn kerr_sweep(gamma_m: f64, delta_mw: f64, kerr: &[f64], drive: &[f64]) -> Result<KerrSweep> {
    kerr_sweep_from(gamma_m, delta_mw, kerr, drive, DEFAULT_FOCK_DIM)
}

/// [`kerr_sweep`] with every solve starting at Fock dimension `fock_dim`.
pub fn kerr_sweep_from(
    gamma_m: f64,
    delta_mw: f64,
    kerr: &[f64],
    drive: &[f64],
    fock_dim: usize,
) -> Result<KerrSweep> {
    let points: Vec<(usize, usize)> =
        (0..kerr.len()).flat_map(|k| (0..drive.len()).map(move |i| (k, i))).collect();
    let solved: Vec<SteadyState> = points
        .par_iter()
        .map(|&(k, i)| steady_state(&KerrModel { fock_dim, ..KerrModel::new(delta_mw, kerr[k], drive[i], gamma_m) }))
        .collect::<Result<_>>()?;
    let mut occupancy = vec![vec![0.0; drive.len()]; kerr.len()];
    let mut warnings = Vec::new();
    for (&(k, i), ss) in points.iter().zip(&solved) {
        occupancy[k][i] = ss.occupancy;
        for w in &ss.warnings {
            warnings.push(format!("K = {}, Ω = {}: {w}", kerr[k], drive[i]));
        }
    }
    Ok(KerrSweep { gamma_m, delta_mw, kerr: kerr.to_vec(), drive: drive.to_vec(), occupancy, warnings })
}

/// Measured occupancy at a drive power (W), with an optional confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyPoint {
    pub power: f64,
    pub occupancy: f64,
    pub ci: Option<(f64, f64)>,
}

/// Search grid for [`fit_kerr`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrGrid {
    pub kerr_min: f64,
    pub kerr_max: f64,
    pub kerr_step: f64,
    /// Relative half-span of the proportionality grid around the linear estimate.
    pub proportionality_span: f64,
    pub proportionality_steps: usize,
    /// Steady-state samples along Ω² used to interpolate each K row.
    pub drive_samples: usize,
}

impl Default for KerrGrid {
    fn default() -> Self {
        Self {
            kerr_min: -0.6,
            kerr_max: 0.2,
            kerr_step: 0.01,
            proportionality_span: 0.5,
            proportionality_steps: 101,
            drive_samples: 41,
        }
    }
}

impl KerrGrid {
    fn kerr_values(&self) -> Result<Vec<f64>> {
        if !(self.kerr_step > 0.0) || !(self.kerr_max >= self.kerr_min) {
            return Err(Error::input("Kerr grid needs kerr_step > 0 and kerr_max >= kerr_min"));
        }
        let count = ((self.kerr_max - self.kerr_min) / self.kerr_step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| self.kerr_min + k as f64 * self.kerr_step).collect())
    }
}

/// Extremes of γ_m and Δ_mw for bounding the fitted K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrExtremes {
    pub gamma_m: (f64, f64),
    pub delta_mw: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KerrFit {
    pub kerr: f64,
    /// Ω²/P in MHz²/W.
    pub proportionality: f64,
    pub r_squared: f64,
    pub kerr_values: Vec<f64>,
    pub proportionality_values: Vec<f64>,
    /// `surface[k][j]` is R² at `kerr_values[k]`, `proportionality_values[j]`.
    pub surface: Vec<Vec<f64>>,
    pub kerr_bounds: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

/// Fit K_m and Ω²/P by maximizing R² between modeled and measured
/// occupancies on a grid.
pub fn fit_kerr(
    data: &[OccupancyPoint],
    gamma_m: f64,
    delta_mw: f64,
    grid: &KerrGrid,
    extremes: Option<&KerrExtremes>,
) -> Result<KerrFit> {
    if data.len() < 4 {
        return Err(Error::input(format!("Kerr fit needs at least 4 points, got {}", data.len())));
    }
    if data.iter().any(|d| !(d.power >= 0.0) || !d.occupancy.is_finite() || !d.power.is_finite()) {
        return Err(Error::input("powers must be finite and >= 0, occupancies finite"));
    }
    let mean = data.iter().map(|d| d.occupancy).sum::<f64>() / data.len() as f64;
    let ss_tot: f64 = data.iter().map(|d| (d.occupancy - mean).powi(2)).sum();
    let scale = data.iter().map(|d| d.occupancy * d.occupancy).sum::<f64>();
    if !(ss_tot > 1e-24 * scale) {
        return Err(Error::input("occupancy data are constant; R² is undefined"));
    }
    if grid.proportionality_steps < 2 || grid.drive_samples < 2 {
        return Err(Error::input("grid needs at least two proportionality steps and drive samples"));
    }
    if !(grid.proportionality_span > 0.0 && grid.proportionality_span < 1.0) {
        return Err(Error::input("proportionality span must lie in (0, 1)"));
    }
    KerrModel::new(delta_mw, 0.0, 0.0, gamma_m).validate()?;

    let mut fit = r2_grid(data, ss_tot, gamma_m, delta_mw, grid)?;
    if let Some(ext) = extremes {
        let mut lo = fit.kerr;
        let mut hi = fit.kerr;
        for g in [ext.gamma_m.0, ext.gamma_m.1] {
            for d in [ext.delta_mw.0, ext.delta_mw.1] {
                let corner = r2_grid(data, ss_tot, g, d, grid)?;
                lo = lo.min(corner.kerr);
                hi = hi.max(corner.kerr);
            }
        }
        fit.kerr_bounds = Some((lo, hi));
    }
    Ok(fit)
}

fn r2_grid(data: &[OccupancyPoint], ss_tot: f64, gamma_m: f64, delta_mw: f64, grid: &KerrGrid) -> Result<KerrFit> {
    let lorentz = (gamma_m / 2.0).powi(2) + delta_mw * delta_mw;
    let spp: f64 = data.iter().map(|d| d.power * d.power).sum();
    if !(spp > 0.0) {
        return Err(Error::input("all powers are zero"));
    }
    let slope = data.iter().map(|d| d.power * d.occupancy).sum::<f64>() / spp;
    if !(slope > 0.0) {
        return Err(Error::input("occupancy does not increase with power"));
    }
    let center = slope * lorentz;
    let span = grid.proportionality_span;
    let steps = grid.proportionality_steps;
    let props: Vec<f64> = (0..steps)
        .map(|j| center * (1.0 - span + 2.0 * span * j as f64 / (steps - 1) as f64))
        .collect();
    let p_max = data.iter().map(|d| d.power).fold(0.0, f64::max);
    let omega2_max = props[steps - 1] * p_max;
    let omega2: Vec<f64> =
        (0..grid.drive_samples).map(|i| omega2_max * i as f64 / (grid.drive_samples - 1) as f64).collect();
    let drives: Vec<f64> = omega2.iter().map(|w| w.sqrt()).collect();

    let kerrs = grid.kerr_values()?;
    let sweep = kerr_sweep(gamma_m, delta_mw, &kerrs, &drives)?;
    let surface: Vec<Vec<f64>> = sweep
        .occupancy
        .par_iter()
        .map(|row| {
            props
                .iter()
                .map(|&c| {
                    let ss_res: f64 = data
                        .iter()
                        .map(|d| (d.occupancy - interpolate(&omega2, row, c * d.power)).powi(2))
                        .sum();
                    1.0 - ss_res / ss_tot
                })
                .collect()
        })
        .collect();

    let (mut bk, mut bj, mut best) = (0, 0, f64::NEG_INFINITY);
    for (k, row) in surface.iter().enumerate() {
        for (j, &r2) in row.iter().enumerate() {
            if r2 > best {
                (bk, bj, best) = (k, j, r2);
            }
        }
    }
    let mut warnings = sweep.warnings;
    if bk == 0 || bk == kerrs.len() - 1 || bj == 0 || bj == steps - 1 {
        warnings.push("best R² lies on the edge of the search grid".into());
    }
    Ok(KerrFit {
        kerr: kerrs[bk],
        proportionality: props[bj],
        r_squared: best,
        kerr_values: kerrs,
        proportionality_values: props,
        surface,
        kerr_bounds: None,
        warnings,
    })
}
