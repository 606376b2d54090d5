use magnonics::fock::{self, CMatrix, C64};
use magnonics::io::linear_occupancy;
use magnonics::lindblad::{
    self, fit_kerr, kerr_sweep, steady_state, steady_state_fixed, KerrExtremes, KerrGrid, KerrModel,
    OccupancyPoint,
};
use magnonics::Error;
use nalgebra::DVector;
use proptest::prelude::*;
use std::f64::consts::PI;

const GAMMA: f64 = 1.3;
const DELTA: f64 = -0.38;

fn lorentz(gamma: f64, delta: f64) -> f64 {
    (gamma / 2.0).powi(2) + delta * delta
}

fn model(delta: f64, kerr: f64, drive: f64, gamma: f64, dim: usize) -> KerrModel {
    let mut m = KerrModel::new(delta, kerr, drive, gamma);
    m.fock_dim = dim;
    m
}

/// ℒ from Kronecker products: −i(I⊗H − Hᵀ⊗I) + γ(c̄⊗c − ½ I⊗c†c − ½ (c†c)ᵀ⊗I).
fn kronecker_liouvillian(m: &KerrModel) -> CMatrix {
    let n = m.fock_dim;
    let id = CMatrix::identity(n, n);
    let h = m.hamiltonian();
    let c = fock::ladder(n);
    let cdc = c.adjoint() * &c;
    let i = C64::new(0.0, 1.0);
    let g = C64::new(2.0 * PI * m.gamma_m, 0.0);
    let half = C64::new(0.5, 0.0);
    (id.kronecker(&h) - h.transpose().kronecker(&id)) * (-i)
        + (c.conjugate().kronecker(&c) - (id.kronecker(&cdc) + cdc.transpose().kronecker(&id)) * half) * g
}

/// Dense solve of ℒρ = 0 with the first row traded for Tr ρ = 1.
fn dense_steady_occupancy(m: &KerrModel) -> f64 {
    let n = m.fock_dim;
    let mut l = kronecker_liouvillian(m);
    for c in 0..n * n {
        l[(0, c)] = C64::new(0.0, 0.0);
    }
    for k in 0..n {
        l[(0, k + n * k)] = C64::new(1.0, 0.0);
    }
    let mut rhs = DVector::zeros(n * n);
    rhs[0] = C64::new(1.0, 0.0);
    let x = l.lu().solve(&rhs).unwrap();
    (0..n).map(|k| k as f64 * x[k + n * k].re).sum()
}

#[test]
fn liouvillian_matches_kronecker_construction() {
    for (d, k, o) in [(-0.38, -0.2, 0.6), (1.1, 0.4, 0.0), (0.0, -1.0, 1.7)] {
        let m = model(d, k, o, GAMMA, 8);
        let built = lindblad::build_liouvillian(&m).unwrap();
        let oracle = kronecker_liouvillian(&m);
        let diff = (built - oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "({d}, {k}, {o}): {diff:e}");
    }
}

#[test]
fn sparse_solve_matches_dense_oracle() {
    for (d, k, o) in [(-0.38, -0.2, 0.5), (0.2, -0.6, 0.9), (0.0, 0.3, 0.3)] {
        let m = model(d, k, o, GAMMA, 14);
        let sparse = steady_state_fixed(&m).unwrap().occupancy;
        let dense = dense_steady_occupancy(&m);
        assert!((sparse - dense).abs() < 1e-10 * dense.max(1.0), "{sparse} vs {dense}");
    }
}

#[test]
fn linear_mode_matches_closed_form() {
    // ⟨n⟩ from 0.01 to 2 at several detunings.
    for delta in [-0.38, 0.0, 0.9] {
        for target in [0.01, 0.1, 0.5, 1.0, 2.0] {
            let drive = (target * lorentz(GAMMA, delta)).sqrt();
            let ss = steady_state(&KerrModel::new(delta, 0.0, drive, GAMMA)).unwrap();
            let exact = linear_occupancy(drive, GAMMA, delta).unwrap();
            assert!((exact - target).abs() < 1e-12);
            assert!((ss.occupancy - exact).abs() / exact < 0.01, "Δ {delta}: {} vs {exact}", ss.occupancy);
        }
    }
}

#[test]
fn steady_state_satisfies_residual_bound() {
    let ss = steady_state(&KerrModel::new(DELTA, -0.2, 1.0, GAMMA)).unwrap();
    assert!(ss.residual <= lindblad::RESIDUAL_TOL * ss.liouvillian_norm);
    let sum: f64 = ss.populations().iter().sum();
    assert!((sum - 1.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn density_matrix_is_physical(
        delta in -2.0f64..2.0,
        kerr in -1.0f64..0.5,
        drive in 0.0f64..1.2,
        gamma in 0.5f64..3.0,
    ) {
        let ss = steady_state(&KerrModel::new(delta, kerr, drive, gamma)).unwrap();
        prop_assert!((ss.trace() - C64::new(1.0, 0.0)).norm() < 1e-10);
        prop_assert!(ss.hermiticity_error() < 1e-10);
        prop_assert!(ss.min_eigenvalue() >= -1e-8);
        prop_assert!(ss.residual <= lindblad::RESIDUAL_TOL * ss.liouvillian_norm);
    }

    #[test]
    fn weak_drive_response_is_independent_of_kerr(
        delta in -2.0f64..2.0,
        kerr in -1.0f64..1.0,
        gamma in 0.5f64..3.0,
    ) {
        // Ω chosen so that the linear estimate is 0.005.
        let drive = (0.005 * lorentz(gamma, delta)).sqrt();
        let mut m = KerrModel::new(delta, kerr, drive, gamma);
        m.fock_dim = 12;
        let n = steady_state(&m).unwrap().occupancy;
        let linear = drive * drive / lorentz(gamma, delta);
        prop_assert!(n <= 0.01);
        prop_assert!((n - linear).abs() / n <= 0.02, "{} vs {}", n, linear);
    }
}

#[test]
fn truncation_doubling_is_converged() {
    for kerr in [0.0, -0.2, -0.6] {
        for drive in [0.3, 0.8, 1.2] {
            let a = steady_state_fixed(&model(DELTA, kerr, drive, GAMMA, 30)).unwrap().occupancy;
            let b = steady_state_fixed(&model(DELTA, kerr, drive, GAMMA, 60)).unwrap().occupancy;
            assert!((a - b).abs() / b < 1e-3, "K {kerr}, Ω {drive}: {a} vs {b}");
        }
    }
}

/// Second differences of ⟨n⟩ on a uniform Ω² grid, paired with the
/// occupancy at the center point.
fn curvature(kerr: f64, delta: f64, omega2_max: f64, samples: usize) -> Vec<(f64, f64)> {
    let w2: Vec<f64> = (0..samples).map(|i| omega2_max * i as f64 / (samples - 1) as f64).collect();
    let drives: Vec<f64> = w2.iter().map(|w| w.sqrt()).collect();
    let sweep = kerr_sweep(GAMMA, delta, &[kerr], &drives).unwrap();
    let n = &sweep.occupancy[0];
    (1..samples - 1).map(|i| (n[i], n[i + 1] - 2.0 * n[i] + n[i - 1])).collect()
}

#[test]
fn negative_kerr_near_resonance_bends_up_then_down() {
    let curv = curvature(-0.2, DELTA, 6.0, 41);
    for &(n, c) in curv.iter().filter(|p| p.0 <= 0.5) {
        assert!(c > 0.0, "curvature {c:e} at n {n}");
    }
    let last = curv.last().unwrap();
    assert!(last.1 < 0.0, "curvature {:e} at n {}", last.1, last.0);
}

#[test]
fn resonant_drive_with_kerr_bends_down() {
    for kerr in [-0.2, 0.2] {
        for &(n, c) in &curvature(kerr, 0.0, 2.0, 11) {
            assert!(c < 0.0, "K {kerr}: curvature {c:e} at n {n}");
        }
    }
    // K = 0 rows are straight.
    for &(_, c) in &curvature(0.0, DELTA, 2.0, 11) {
        assert!(c.abs() < 1e-9);
    }
}

#[test]
fn rows_share_low_drive_slope() {
    let w2: f64 = 1e-4;
    let expected = 1.0 / lorentz(GAMMA, DELTA);
    let kerrs = [-0.6, -0.2, 0.0, 0.2];
    let sweep = kerr_sweep(GAMMA, DELTA, &kerrs, &[0.0, w2.sqrt()]).unwrap();
    for (k, row) in kerrs.iter().zip(&sweep.occupancy) {
        let slope = (row[1] - row[0]) / w2;
        assert!((slope - expected).abs() / expected < 1e-3, "K {k}: {slope} vs {expected}");
    }
}

#[test]
fn sweep_of_twenty_by_five_is_fast() {
    let kerrs: Vec<f64> = (0..20).map(|k| -0.6 + 0.04 * k as f64).collect();
    let drives = [0.2, 0.5, 0.8, 1.1, 1.4];
    let start = std::time::Instant::now();
    let sweep = kerr_sweep(GAMMA, DELTA, &kerrs, &drives).unwrap();
    assert!(start.elapsed().as_secs() < 120);
    assert_eq!(sweep.occupancy.len(), 20);
    assert!(sweep.occupancy.iter().all(|r| r.len() == 5));
}

const PROPORTIONALITY: f64 = 1.9e14;

fn synthetic(kerr: f64) -> Vec<OccupancyPoint> {
    (1..=12)
        .map(|i| {
            let power = 0.5e-15 * i as f64;
            let drive = (PROPORTIONALITY * power).sqrt();
            let occupancy = steady_state(&KerrModel::new(DELTA, kerr, drive, GAMMA)).unwrap().occupancy;
            OccupancyPoint { power, occupancy, ci: None }
        })
        .collect()
}

fn test_grid() -> KerrGrid {
    KerrGrid {
        kerr_min: -0.4,
        kerr_max: 0.1,
        kerr_step: 0.02,
        proportionality_span: 0.5,
        proportionality_steps: 41,
        drive_samples: 21,
    }
}

#[test]
fn kerr_fit_recovers_generating_pair() {
    let grid = test_grid();
    let fit = fit_kerr(&synthetic(-0.2), GAMMA, DELTA, &grid, None).unwrap();
    assert!((fit.kerr + 0.2).abs() <= grid.kerr_step + 1e-9, "K {}", fit.kerr);
    let dp = fit.proportionality_values[1] - fit.proportionality_values[0];
    assert!((fit.proportionality - PROPORTIONALITY).abs() <= dp, "{:e}", fit.proportionality);
    assert!(fit.r_squared > 0.999);
    assert_eq!(fit.surface.len(), fit.kerr_values.len());
    assert!(fit.surface.iter().all(|r| r.len() == grid.proportionality_steps));
    assert!(fit.warnings.is_empty(), "{:?}", fit.warnings);
}

#[test]
fn kerr_fit_of_linear_data_gives_zero() {
    let grid = test_grid();
    let fit = fit_kerr(&synthetic(0.0), GAMMA, DELTA, &grid, None).unwrap();
    assert!(fit.kerr.abs() <= grid.kerr_step + 1e-9, "K {}", fit.kerr);
}

#[test]
fn kerr_fit_bounds_bracket_best_value() {
    let grid = KerrGrid { kerr_step: 0.05, proportionality_steps: 21, drive_samples: 15, ..test_grid() };
    let ext = KerrExtremes { gamma_m: (1.0, 1.6), delta_mw: (-0.5, -0.26) };
    let fit = fit_kerr(&synthetic(-0.2), GAMMA, DELTA, &grid, Some(&ext)).unwrap();
    let (lo, hi) = fit.kerr_bounds.unwrap();
    assert!(lo <= fit.kerr && fit.kerr <= hi);
}

#[test]
fn kerr_fit_rejects_bad_data() {
    let grid = test_grid();
    let data = synthetic(0.0);
    assert!(matches!(fit_kerr(&data[..3], GAMMA, DELTA, &grid, None), Err(Error::InvalidInput(_))));
    let flat: Vec<OccupancyPoint> = data.iter().map(|d| OccupancyPoint { occupancy: 0.4, ..*d }).collect();
    assert!(matches!(fit_kerr(&flat, GAMMA, DELTA, &grid, None), Err(Error::InvalidInput(_))));
}
