//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use magnonics::dispersive::{self, CompositeModel, SpectrumModel};
use magnonics::io::{self, CrossingParams, ReflectionParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

pub fn canonical() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../params/canonical.toml")
}

pub fn canonical_text() -> String {
    std::fs::read_to_string(canonical()).unwrap()
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_magnonics")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Run and parse the JSON report, panicking with stderr on failure.
pub fn report(args: &[&str]) -> Value {
    let r = run(args);
    assert_eq!(r.code, 0, "magnonics {args:?} failed: {}", r.stderr);
    serde_json::from_str(&r.stdout).unwrap()
}

pub fn temp_file(content: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(content.as_bytes()).unwrap();
    f.flush().unwrap();
    f
}

pub fn comparison(report: &Value, quantity: &str) -> f64 {
    report["comparisons"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["quantity"] == quantity)
        .unwrap_or_else(|| panic!("no comparison `{quantity}`"))["value"]
        .as_f64()
        .unwrap()
}

/// Parsed CSV rows (header dropped).
pub fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

pub fn noise(seed: u64, sigma: f64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

/// Coupler-like branch of the crossing, `current_mA,omega_GHz`.
pub fn crossing_csv(g: f64, sigma: f64, seed: u64) -> String {
    let p = CrossingParams::from_physical(8456.0, g, 5.5, 47.6).unwrap();
    let current: Vec<f64> = (0..60).map(|k| 4.0 + 0.05 * k as f64).collect();
    let eps = noise(seed, sigma, current.len());
    let mut s = String::from("# synthetic avoided crossing\ncurrent_mA,omega_GHz\n");
    for (i, e) in current.iter().zip(eps) {
        s += &format!("{i},{}\n", (io::crossing_branch(*i, &p) + e) / 1e3);
    }
    s
}

/// Coupler reflection spectra at I = 5..6 mA, `current_mA,omega_r_GHz,re_r`.
pub fn reflection_csv(g: f64, gamma_m: f64, sigma: f64, seed: u64) -> String {
    let cp = CrossingParams::from_physical(8456.0, g, 5.5, 47.6).unwrap();
    let omega: Vec<f64> = (0..401).map(|k| 8406.0 + 0.25 * k as f64).collect();
    let mut s = String::from("current_mA,omega_r_GHz,re_r\n");
    for (n, i) in [5.0, 5.25, 5.5, 5.75, 6.0].iter().enumerate() {
        let rp = ReflectionParams {
            coupler_freq: 8456.0,
            kappa_int: 2.08 - 0.51,
            kappa_cpl: 0.51,
            coupling: g,
            gamma_m,
            magnon_freq: cp.magnon_freq(*i),
        };
        let eps = noise(seed + n as u64, sigma, omega.len());
        for (w, e) in omega.iter().zip(eps) {
            s += &format!("{i},{},{}\n", w / 1e3, io::reflection(*w, &rp).re + e);
        }
    }
    s
}

/// Fixed constants of the canonical spectroscopy section.
pub const OMEGA_Q: f64 = 7991.56;
pub const GAMMA_Q: f64 = 0.78;
pub const GAMMA_M: f64 = 1.3;
pub const PHOTON_WEIGHT: f64 = 0.03;
pub const CHI_QP: f64 = -0.8;
pub const KAPPA_P: f64 = 3.72;

pub fn magnon_model(chi: f64, delta: f64, nbar: f64, scale: f64, offset: f64) -> CompositeModel {
    CompositeModel {
        magnon: SpectrumModel::from_occupancy(OMEGA_Q, GAMMA_Q, chi, GAMMA_M, delta, nbar).unwrap(),
        chi_qp: CHI_QP,
        kappa_p: KAPPA_P,
        probe_detuning: 0.0,
        photon_weight: PHOTON_WEIGHT,
        scale,
        offset,
    }
}

/// Qubit spectrum under the Kittel drive, `omega_s_GHz,re_delta_r`.
pub fn magnon_spectrum_csv(model: &CompositeModel, sigma: f64, seed: u64) -> String {
    let omega: Vec<f64> = (0..1001).map(|k| 7987.0 + 0.015 * k as f64).collect();
    let y = dispersive::composite_spectrum(model, &omega).unwrap();
    let eps = noise(seed, sigma, omega.len());
    let mut s = String::from("omega_s_GHz,re_delta_r\n");
    for ((w, v), e) in omega.iter().zip(y).zip(eps) {
        s += &format!("{},{}\n", w / 1e3, v + e);
    }
    s
}

/// Occupancy table `p_mw_fW,n_bar,ci` from a per-fW slope.
pub fn occupancy_csv(slope: f64, sigma: f64, seed: u64) -> String {
    let powers: Vec<f64> = (1..=16).map(|k| 0.2 * k as f64).collect();
    let eps = noise(seed, sigma, powers.len());
    let mut s = String::from("p_mw_fW,n_bar,ci\n");
    for (p, e) in powers.iter().zip(eps) {
        s += &format!("{p},{},{}\n", slope * p + e, 2.0 * sigma);
    }
    s
}
