//! Hybrid cavity / transmon / Kittel-mode Hamiltonian.
//!
//! The Hamiltonian (in MHz, linear frequency) is
//!
//! ```text
//! H = Σ_p ω_p a_p†a_p + (ω_q − α/2) b†b + (α/2)(b†b)² + ω_m c†c
//!   + Σ_p [ g_q,p (a_p†b + a_p b†) + g_m,p (a_p†c + a_p c†) ]
//! ```
//!
//! with bare parameters from [`SystemParams`]. Dressed quantities (dispersive
//! shifts, Kerr coefficient, Lamb shifts, qubit-magnon coupling) are read off
//! the labeled spectrum returned by [`diagonalize`].

use std::collections::HashMap;

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{CMatrix, ModeLayout, Operator, C64};

pub const TRANSMON: &str = "transmon";
pub const KITTEL: &str = "kittel";

/// Overlap below which a label is considered unreliable.
pub const LOW_OVERLAP: f64 = 0.5;

/// Relative change that `convergence_check` flags.
pub const CONVERGENCE_FLAG: f64 = 0.01;

/// One rectangular-cavity mode and its couplings (MHz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    pub label: String,
    pub bare_freq: f64,
    pub qubit_coupling: f64,
    /// Signed: the relative sign between modes matters for the drive.
    pub magnon_coupling: f64,
    /// Total linewidth κ.
    pub linewidth: Option<f64>,
    /// External port coupling rate κ^cpl.
    pub coupling_rate: Option<f64>,
}

impl CavityMode {
    /// κ^int = κ − κ^cpl when both are known.
    pub fn internal_loss(&self) -> Option<f64> {
        Some(self.linewidth? - self.coupling_rate?)
    }
}

/// Bare parameters of the hybrid system. All frequencies and rates in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub cavity_modes: Vec<CavityMode>,
    pub qubit_bare_freq: f64,
    /// Bare anharmonicity ω_ef − ω_ge, negative for a transmon.
    pub bare_anharmonicity: f64,
    pub magnon_bare_freq: f64,
    /// Intrinsic qubit linewidth γ_q(0).
    pub qubit_linewidth: Option<f64>,
    pub magnon_linewidth: Option<f64>,
    /// Cavity mode used for qubit readout.
    pub probe_mode: String,
    /// Cavity mode mediating the qubit-magnon coupling.
    pub coupler_mode: String,
    /// Measured qubit-magnon coupling; when present it replaces the
    /// diagonalized value in the Kittel-mode drive strength.
    pub measured_coupling_qm: Option<f64>,
}

impl SystemParams {
    /// Device parameters of the reference transmon / YIG-sphere hybrid.
    pub fn reference_device() -> Self {
        let mode = |label: &str, f, gq, gm, k: Option<f64>, kc: Option<f64>| CavityMode {
            label: label.to_string(),
            bare_freq: f,
            qubit_coupling: gq,
            magnon_coupling: gm,
            linewidth: k,
            coupling_rate: kc,
        };
        Self {
            cavity_modes: vec![
                mode("te101", 6994.0, 73.0, -13.6, Some(1.39), Some(0.13)),
                mode("te102", 8414.5, 126.1, 22.5, Some(2.08), Some(0.51)),
                mode("te103", 10441.5, 135.4, -20.3, Some(3.72), Some(1.27)),
                mode("te104", 12800.0, 116.0, 14.0, None, None),
            ],
            qubit_bare_freq: 8040.6,
            bare_anharmonicity: -137.2,
            magnon_bare_freq: 7951.50,
            qubit_linewidth: Some(0.25),
            magnon_linewidth: Some(1.3),
            probe_mode: "te103".into(),
            coupler_mode: "te102".into(),
            measured_coupling_qm: Some(7.79),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cavity_modes.is_empty() {
            return Err(Error::input("at least one cavity mode is required"));
        }
        if !(self.bare_anharmonicity < 0.0) {
            return Err(Error::input("bare anharmonicity must be negative"));
        }
        let mut seen = Vec::new();
        for m in &self.cavity_modes {
            if m.label == TRANSMON || m.label == KITTEL {
                return Err(Error::input(format!("cavity label `{}` is reserved", m.label)));
            }
            if seen.contains(&&m.label) {
                return Err(Error::input(format!("duplicate cavity label `{}`", m.label)));
            }
            seen.push(&m.label);
            for (name, v) in [("linewidth", m.linewidth), ("coupling_rate", m.coupling_rate)] {
                if let Some(v) = v {
                    if !(v >= 0.0) {
                        return Err(Error::input(format!("{}.{name} must be >= 0", m.label)));
                    }
                }
            }
            if let Some(int) = m.internal_loss() {
                if int < 0.0 {
                    return Err(Error::input(format!(
                        "{}: coupling rate exceeds total linewidth",
                        m.label
                    )));
                }
            }
        }
        for (name, v) in [
            ("qubit_linewidth", self.qubit_linewidth),
            ("magnon_linewidth", self.magnon_linewidth),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    return Err(Error::input(format!("{name} must be >= 0")));
                }
            }
        }
        self.cavity(&self.probe_mode)?;
        self.cavity(&self.coupler_mode)?;
        Ok(())
    }

    pub fn cavity(&self, label: &str) -> Result<&CavityMode> {
        self.cavity_modes
            .iter()
            .find(|m| m.label == label)
            .ok_or_else(|| Error::input(format!("no cavity mode labeled `{label}`")))
    }

    /// Copy with every coupling multiplied by `factor`.
    pub fn with_scaled_couplings(&self, factor: f64) -> Self {
        let mut p = self.clone();
        for m in &mut p.cavity_modes {
            m.qubit_coupling *= factor;
            m.magnon_coupling *= factor;
        }
        p
    }

    /// Cavity modes first (in parameter order), then transmon, then Kittel mode.
    pub fn layout(&self, cavity_dim: usize, transmon_dim: usize, magnon_dim: usize) -> Result<ModeLayout> {
        let mut modes: Vec<(String, usize)> = self
            .cavity_modes
            .iter()
            .map(|m| (m.label.clone(), cavity_dim))
            .collect();
        modes.push((TRANSMON.into(), transmon_dim));
        modes.push((KITTEL.into(), magnon_dim));
        ModeLayout::new(modes)
    }

    /// Three levels per subsystem.
    pub fn default_layout(&self) -> Result<ModeLayout> {
        self.layout(3, 3, 3)
    }
}

fn check_layout(params: &SystemParams, layout: &ModeLayout) -> Result<()> {
    let expected = params.cavity_modes.len() + 2;
    if layout.num_modes() != expected {
        return Err(Error::input(format!(
            "layout has {} modes, parameters describe {expected}",
            layout.num_modes()
        )));
    }
    for m in &params.cavity_modes {
        layout.index_of(&m.label)?;
    }
    layout.index_of(TRANSMON)?;
    layout.index_of(KITTEL)?;
    Ok(())
}

/// Nonzero upper-and-lower matrix elements `(row, col, value)` of the hybrid
/// Hamiltonian, generated state by state without forming Kronecker products.
pub fn hamiltonian_entries(params: &SystemParams, layout: &ModeLayout) -> Result<Vec<(usize, usize, f64)>> {
    params.validate()?;
    check_layout(params, layout)?;
    let iq = layout.index_of(TRANSMON)?;
    let im = layout.index_of(KITTEL)?;
    let cav: Vec<(usize, &CavityMode)> = params
        .cavity_modes
        .iter()
        .map(|m| Ok((layout.index_of(&m.label)?, m)))
        .collect::<Result<_>>()?;
    let dims = layout.dims();
    let alpha = params.bare_anharmonicity;

    let mut entries = Vec::new();
    for i in 0..layout.total_dim() {
        let occ = layout.occupations(i);
        let nb = occ[iq] as f64;
        let mut diag = (params.qubit_bare_freq - alpha / 2.0) * nb
            + (alpha / 2.0) * nb * nb
            + params.magnon_bare_freq * occ[im] as f64;
        for &(ip, mode) in &cav {
            diag += mode.bare_freq * occ[ip] as f64;
        }
        if diag != 0.0 {
            entries.push((i, i, diag));
        }
        // a_p† x and its conjugate, for x the transmon or magnon lowering operator
        for &(ip, mode) in &cav {
            if occ[ip] + 1 >= dims[ip] {
                continue;
            }
            for (ix, g) in [(iq, mode.qubit_coupling), (im, mode.magnon_coupling)] {
                if g == 0.0 || occ[ix] == 0 {
                    continue;
                }
                let mut to = occ.clone();
                to[ip] += 1;
                to[ix] -= 1;
                let j = layout.basis_index(&to)?;
                let v = g * ((occ[ip] + 1) as f64).sqrt() * (occ[ix] as f64).sqrt();
                entries.push((j, i, v));
                entries.push((i, j, v));
            }
        }
    }
    Ok(entries)
}

/// Hybrid Hamiltonian in MHz on the given layout.
pub fn build_hamiltonian(params: &SystemParams, layout: &ModeLayout) -> Result<Operator> {
    let n = layout.total_dim();
    let mut m = CMatrix::zeros(n, n);
    for (i, j, v) in hamiltonian_entries(params, layout)? {
        m[(i, j)] += C64::new(v, 0.0);
    }
    Operator::from_matrix(layout, m)
}

/// Labeled spectrum of the hybrid Hamiltonian, built sparsely.
pub fn hybrid_levels(params: &SystemParams, layout: &ModeLayout) -> Result<DressedLevels> {
    let entries: Vec<(usize, usize, C64)> = hamiltonian_entries(params, layout)?
        .into_iter()
        .map(|(i, j, v)| (i, j, C64::new(v, 0.0)))
        .collect();
    diagonalize_entries(layout, &entries)
}

/// Eigenvalues of a Hamiltonian with each eigenstate tagged by a bare state.
#[derive(Debug, Clone)]
pub struct DressedLevels {
    layout: ModeLayout,
    /// Energies relative to the vacuum-labeled state, ascending.
    energies: Vec<f64>,
    labels: Vec<Vec<usize>>,
    overlaps: Vec<f64>,
    /// Eigenstates whose label is not their own maximum-overlap bare state.
    reassigned: Vec<bool>,
    by_label: HashMap<usize, usize>,
}

impl DressedLevels {
    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn labels(&self) -> &[Vec<usize>] {
        &self.labels
    }

    pub fn overlaps(&self) -> &[f64] {
        &self.overlaps
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Number of eigenstates that lost their preferred label to a
    /// better-overlapping competitor.
    pub fn reassigned_count(&self) -> usize {
        self.reassigned.iter().filter(|&&r| r).count()
    }

    fn lookup(&self, occupations: &[(&str, usize)]) -> Result<usize> {
        let mut occ = vec![0; self.layout.num_modes()];
        for &(label, n) in occupations {
            occ[self.layout.index_of(label)?] = n;
        }
        let basis = self.layout.basis_index(&occ).map_err(|_| {
            Error::input(format!("state {occupations:?} is outside the truncated space"))
        })?;
        Ok(self.by_label[&basis])
    }

    /// Energy of the eigenstate labeled by the given occupations (other modes empty).
    pub fn energy(&self, occupations: &[(&str, usize)]) -> Result<f64> {
        Ok(self.energies[self.lookup(occupations)?])
    }

    pub fn overlap(&self, occupations: &[(&str, usize)]) -> Result<f64> {
        Ok(self.overlaps[self.lookup(occupations)?])
    }
}

/// Disjoint index sets connected by nonzero matrix elements.
fn connected_blocks(n: usize, entries: &[(usize, usize, C64)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for &(i, j, v) in entries {
        if i != j && v != C64::new(0.0, 0.0) {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut blocks: Vec<Vec<usize>> = groups.into_values().collect();
    blocks.sort_by_key(|b| b[0]);
    blocks
}

const TIE_TOL: f64 = 1e-9;

/// Full Hermitian eigendecomposition with bare-state labels.
///
/// The matrix is split into blocks that share no nonzero elements (for the
/// hybrid Hamiltonian these are the excitation-number sectors) and each block
/// is diagonalized separately. Labels are assigned greedily in descending
/// order of |overlap|².
pub fn diagonalize(h: &Operator) -> Result<DressedLevels> {
    if !h.is_hermitian() {
        return Err(Error::input(format!(
            "operator is not Hermitian (relative error {:.3e})",
            h.hermiticity_error()
        )));
    }
    let m = h.matrix();
    let mut entries = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != C64::new(0.0, 0.0) {
                entries.push((i, j, m[(i, j)]));
            }
        }
    }
    diagonalize_entries(h.layout(), &entries)
}

/// Entries must describe a Hermitian matrix; duplicates are summed.
/// Eigenvalues and |eigenvector component|² of a Hermitian block. Real
/// blocks take the cheaper real symmetric path.
fn block_eigen(sub: CMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let fail = || Error::numerical("Hermitian eigensolver did not converge");
    if sub.iter().all(|z| z.im == 0.0) {
        let eig = SymmetricEigen::try_new(sub.map(|z| z.re), 1e-14, 10_000).ok_or_else(fail)?;
        Ok((eig.eigenvalues, eig.eigenvectors.map(|x| x * x)))
    } else {
        let eig = SymmetricEigen::try_new(sub, 1e-14, 10_000).ok_or_else(fail)?;
        Ok((eig.eigenvalues, eig.eigenvectors.map(|z| z.norm_sqr())))
    }
}

fn diagonalize_entries(layout: &ModeLayout, entries: &[(usize, usize, C64)]) -> Result<DressedLevels> {
    let n = layout.total_dim();
    let mut energies = vec![0.0; n];
    let mut labels = vec![0usize; n];
    let mut overlaps = vec![0.0; n];
    let mut reassigned = vec![false; n];
    let mut count = 0;

    let blocks = connected_blocks(n, entries);
    let mut position = vec![(0usize, 0usize); n];
    for (bi, block) in blocks.iter().enumerate() {
        for (k, &i) in block.iter().enumerate() {
            position[i] = (bi, k);
        }
    }
    let mut subs: Vec<CMatrix> = blocks.iter().map(|b| CMatrix::zeros(b.len(), b.len())).collect();
    for &(i, j, v) in entries {
        let (bi, ki) = position[i];
        let (bj, kj) = position[j];
        debug_assert_eq!(bi, bj);
        subs[bi][(ki, kj)] += v;
    }

    for (block, sub) in blocks.iter().zip(subs) {
        let k = block.len();
        let (values, weights) = block_eigen(sub)?;
        // weights[(bare, eigen)] within this block
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * k);
        for e in 0..k {
            for b in 0..k {
                pairs.push((weights[(b, e)], b, e));
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

        let best_for_eigen: Vec<f64> = (0..k)
            .map(|e| (0..k).map(|b| weights[(b, e)]).fold(0.0, f64::max))
            .collect();
        let mut bare_taken = vec![false; k];
        let mut eigen_taken = vec![false; k];
        let mut assigned = 0;
        for (idx, &(w, b, e)) in pairs.iter().enumerate() {
            if bare_taken[b] || eigen_taken[e] {
                continue;
            }
            // An equally good unassigned alternative means the label is ambiguous.
            let tie = w > 1e-12
                && pairs[idx + 1..]
                    .iter()
                    .take_while(|p| w - p.0 <= TIE_TOL)
                    .any(|p| (p.2 == e && !bare_taken[p.1]) || (p.1 == b && !eigen_taken[p.2]));
            if tie {
                return Err(Error::Labeling(format!(
                    "eigenstate near {:.6} MHz has degenerate overlaps ({w:.6}) with several bare states",
                    values[e]
                )));
            }
            bare_taken[b] = true;
            eigen_taken[e] = true;
            let slot = count + assigned;
            energies[slot] = values[e];
            labels[slot] = block[b];
            overlaps[slot] = w;
            reassigned[slot] = w + TIE_TOL < best_for_eigen[e];
            assigned += 1;
            if assigned == k {
                break;
            }
        }
        count += k;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let layout = layout.clone();
    let vacuum = layout.basis_index(&vec![0; layout.num_modes()])?;
    let ground_slot = (0..n)
        .find(|&i| labels[i] == vacuum)
        .ok_or_else(|| Error::Labeling("no eigenstate labeled as the vacuum".into()))?;
    let e0 = energies[ground_slot];

    let mut out = DressedLevels {
        layout: layout.clone(),
        energies: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        overlaps: Vec::with_capacity(n),
        reassigned: Vec::with_capacity(n),
        by_label: HashMap::with_capacity(n),
    };
    for (pos, &i) in order.iter().enumerate() {
        out.energies.push(energies[i] - e0);
        out.labels.push(layout.occupations(labels[i]));
        out.overlaps.push(overlaps[i]);
        out.reassigned.push(reassigned[i]);
        out.by_label.insert(labels[i], pos);
    }
    if out.energies[0] < -1e-9 {
        return Err(Error::Labeling(format!(
            "vacuum-labeled state is not the ground state ({:.6} MHz below it)",
            -out.energies[0]
        )));
    }
    Ok(out)
}

/// Dispersive shifts read off a labeled spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersiveShifts {
    /// (ω_p^e − ω_p^g)/2 for the probe cavity mode.
    pub chi_qp: f64,
    /// (ω_m^e − ω_m^g)/2.
    pub chi_qm: f64,
    /// Full qubit-state-dependent pull of the probe mode, ω_p^e − ω_p^g.
    pub probe_pull: f64,
    /// Smallest label overlap among the states used.
    pub min_overlap: f64,
}

pub fn extract_dispersive(levels: &DressedLevels, probe: &str) -> Result<DispersiveShifts> {
    let states: [&[(&str, usize)]; 6] = [
        &[(TRANSMON, 1)],
        &[(probe, 1)],
        &[(probe, 1), (TRANSMON, 1)],
        &[(KITTEL, 1)],
        &[(KITTEL, 1), (TRANSMON, 1)],
        &[],
    ];
    let mut e = [0.0; 6];
    let mut min_overlap: f64 = 1.0;
    for (slot, s) in e.iter_mut().zip(states) {
        *slot = levels.energy(s)?;
        min_overlap = min_overlap.min(levels.overlap(s)?);
    }
    let [eq, ep, epq, em, emq, e0] = e;
    let probe_g = ep - e0;
    let probe_e = epq - eq;
    let magnon_g = em - e0;
    let magnon_e = emq - eq;
    Ok(DispersiveShifts {
        chi_qp: 0.5 * (probe_e - probe_g),
        chi_qm: 0.5 * (magnon_e - magnon_g),
        probe_pull: probe_e - probe_g,
        min_overlap,
    })
}

/// K_m = 2 ω_m,0→1 − ω_m,0→2 with the transmon in its ground state.
pub fn extract_kerr(levels: &DressedLevels) -> Result<f64> {
    let w01 = levels.energy(&[(KITTEL, 1)])?;
    let w02 = levels.energy(&[(KITTEL, 2)])?;
    Ok(2.0 * w01 - w02)
}

/// Dressed magnon frequency ω_m^g.
pub fn dressed_magnon(levels: &DressedLevels) -> Result<f64> {
    levels.energy(&[(KITTEL, 1)])
}

/// Dressed qubit frequency and anharmonicity `(ω_q, α)`, all other modes empty.
pub fn dressed_qubit(levels: &DressedLevels) -> Result<(f64, f64)> {
    let e = levels.energy(&[(TRANSMON, 1)])?;
    let f = levels.energy(&[(TRANSMON, 2)])?;
    Ok((e, (f - e) - e))
}

/// Everything derived from one diagonalization, plus the qubit-magnon coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub chi_qp: f64,
    pub chi_qm: f64,
    pub probe_pull: f64,
    pub kerr_m: f64,
    pub g_qm: f64,
    pub magnon_dressed_freq: f64,
    pub lamb_shift_m: f64,
    pub dressed_qubit_freq: f64,
    pub lamb_shift_q: f64,
    pub dressed_anharmonicity: f64,
    pub probe_dressed_freq: f64,
    pub min_overlap: f64,
    pub warnings: Vec<String>,
}

/// Spectrum-derived quantities at a fixed truncation (no coupling search).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelQuantities {
    pub shifts: DispersiveShifts,
    pub kerr_m: f64,
    pub magnon_dressed_freq: f64,
    pub dressed_qubit_freq: f64,
    pub dressed_anharmonicity: f64,
    pub probe_dressed_freq: f64,
    pub min_overlap: f64,
}

pub fn level_quantities(params: &SystemParams, layout: &ModeLayout) -> Result<LevelQuantities> {
    let levels = hybrid_levels(params, layout)?;
    let shifts = extract_dispersive(&levels, &params.probe_mode)?;
    let kerr_m = extract_kerr(&levels)?;
    let (wq, alpha) = dressed_qubit(&levels)?;
    let mut min_overlap = shifts.min_overlap;
    for s in [&[(KITTEL, 2)][..], &[(TRANSMON, 2)]] {
        min_overlap = min_overlap.min(levels.overlap(s)?);
    }
    Ok(LevelQuantities {
        shifts,
        kerr_m,
        magnon_dressed_freq: dressed_magnon(&levels)?,
        dressed_qubit_freq: wq,
        dressed_anharmonicity: alpha,
        probe_dressed_freq: levels.energy(&[(params.probe_mode.as_str(), 1)])?,
        min_overlap,
    })
}

/// All dressed parameters at the given truncation.
pub fn derive(params: &SystemParams, layout: &ModeLayout) -> Result<DerivedParams> {
    let q = level_quantities(params, layout)?;
    let g_qm = extract_coupling_qm(params, None)?;
    let mut warnings = Vec::new();
    if q.min_overlap < LOW_OVERLAP {
        warnings.push(format!(
            "reduced confidence: smallest label overlap is {:.3} (< {LOW_OVERLAP}); states are strongly hybridized",
            q.min_overlap
        ));
    }
    // Kerr coefficient diverges where ω_m^g crosses a transmon transition.
    let pole_distance = [q.dressed_qubit_freq, q.dressed_qubit_freq + q.dressed_anharmonicity]
        .iter()
        .map(|w| (q.magnon_dressed_freq - w).abs())
        .fold(f64::INFINITY, f64::min);
    if pole_distance < 3.0 * g_qm {
        warnings.push(format!(
            "magnon is {pole_distance:.2} MHz from a transmon transition (< 3 g_qm); Kerr and dispersive values are near a pole"
        ));
    }
    Ok(DerivedParams {
        chi_qp: q.shifts.chi_qp,
        chi_qm: q.shifts.chi_qm,
        probe_pull: q.shifts.probe_pull,
        kerr_m: q.kerr_m,
        g_qm,
        magnon_dressed_freq: q.magnon_dressed_freq,
        lamb_shift_m: params.magnon_bare_freq - q.magnon_dressed_freq,
        dressed_qubit_freq: q.dressed_qubit_freq,
        lamb_shift_q: params.qubit_bare_freq - q.dressed_qubit_freq,
        dressed_anharmonicity: q.dressed_anharmonicity,
        probe_dressed_freq: q.probe_dressed_freq,
        min_overlap: q.min_overlap,
        warnings,
    })
}

/// Splitting between the two single-excitation eigenstates carrying the most
/// qubit-e plus one-magnon weight.
fn hybridized_gap(params: &SystemParams, layout: &ModeLayout, magnon_freq: f64) -> Result<f64> {
    let mut p = params.clone();
    p.magnon_bare_freq = magnon_freq;
    let h = build_hamiltonian(&p, layout)?;
    let eig = SymmetricEigen::try_new(h.into_matrix(), 1e-14, 10_000)
        .ok_or_else(|| Error::numerical("Hermitian eigensolver did not converge"))?;
    let n = layout.num_modes();
    let mut e_state = vec![0; n];
    e_state[layout.index_of(TRANSMON)?] = 1;
    let mut m_state = vec![0; n];
    m_state[layout.index_of(KITTEL)?] = 1;
    let (ie, im) = (layout.basis_index(&e_state)?, layout.basis_index(&m_state)?);
    let mut weighted: Vec<(f64, f64)> = (0..eig.eigenvalues.len())
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            (v[ie].norm_sqr() + v[im].norm_sqr(), eig.eigenvalues[k])
        })
        .collect();
    weighted.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok((weighted[0].1 - weighted[1].1).abs())
}

const GOLDEN_TOL: f64 = 1e-3;

/// Qubit-magnon coupling as half the minimal splitting of the hybridized
/// qubit/one-magnon levels, found by golden-section search over the bare
/// magnon frequency. The default bracket is ω_q^bare ± 50 MHz.
pub fn extract_coupling_qm(params: &SystemParams, bracket: Option<(f64, f64)>) -> Result<f64> {
    params.validate()?;
    let (lo, hi) = bracket.unwrap_or((params.qubit_bare_freq - 50.0, params.qubit_bare_freq + 50.0));
    if !(hi > lo) {
        return Err(Error::input("coupling search bracket must have hi > lo"));
    }
    // Only the single-excitation sector matters, which two levels per mode capture exactly.
    let layout = params.layout(2, 2, 2)?;
    let gap = |w: f64| hybridized_gap(params, &layout, w);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (gap(c)?, gap(d)?);
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = gap(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = gap(d)?;
        }
    }
    let x = 0.5 * (a + b);
    if x - lo < 2.0 * GOLDEN_TOL || hi - x < 2.0 * GOLDEN_TOL {
        return Err(Error::numerical(format!(
            "qubit-magnon gap minimum lies on the search bracket edge ({lo:.3}, {hi:.3}) MHz"
        )));
    }
    Ok(0.5 * gap(x)?)
}

/// Result of re-deriving the spectrum quantities on an enlarged truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub base: LevelQuantities,
    pub enlarged: LevelQuantities,
    /// (name, relative change) per quantity.
    pub changes: Vec<(&'static str, f64)>,
    pub max_relative_change: f64,
    /// Set when a quantity moved by more than 1% or a label overlap fell
    /// below [`LOW_OVERLAP`].
    pub flagged: bool,
}

fn relative_change(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

pub fn convergence_check(params: &SystemParams, base_layout: &ModeLayout) -> Result<ConvergenceReport> {
    let base = level_quantities(params, base_layout)?;
    let enlarged = level_quantities(params, &base_layout.enlarged(1))?;
    let changes = vec![
        ("chi_qp", relative_change(base.shifts.chi_qp, enlarged.shifts.chi_qp)),
        ("chi_qm", relative_change(base.shifts.chi_qm, enlarged.shifts.chi_qm)),
        ("kerr_m", relative_change(base.kerr_m, enlarged.kerr_m)),
        (
            "magnon_dressed_freq",
            relative_change(base.magnon_dressed_freq, enlarged.magnon_dressed_freq),
        ),
        (
            "dressed_qubit_freq",
            relative_change(base.dressed_qubit_freq, enlarged.dressed_qubit_freq),
        ),
        (
            "dressed_anharmonicity",
            relative_change(base.dressed_anharmonicity, enlarged.dressed_anharmonicity),
        ),
    ];
    let max_relative_change = changes.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(ConvergenceReport {
        changes,
        max_relative_change,
        flagged: max_relative_change > CONVERGENCE_FLAG
            || base.min_overlap.min(enlarged.min_overlap) < LOW_OVERLAP,
        base,
        enlarged,
    })
}
