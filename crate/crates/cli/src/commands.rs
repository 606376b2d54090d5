//! Subcommand implementations. Each returns a report and, where it makes
//! sense, a plot table.

use serde_json::json;

use magnonics::dispersive::{self, CompositeModel, SpectrumModel};
use magnonics::fitting::{self, CouplerConstants, MagnonFitConstants, ReflectionSpectrum};
use magnonics::hybrid;
use magnonics::io::{self, CrossingParams, ReflectionParams};
use magnonics::lindblad::{self, KerrExtremes, KerrGrid, KerrModel, OccupancyPoint};
use magnonics::units::{ghz_to_mhz, mhz_to_ghz, ATTOWATT, FEMTOWATT};

use crate::config::{ParameterFile, Truncation};
use crate::data::{self, cell, Table};
use crate::error::CliError;
use crate::flags::{range, Overrides};
use crate::report::{to_value, Comparison, Report};

/// Published reference values compared against in reports.
pub mod reference {
    pub const G_QM: f64 = 6.67;
    pub const CHI_QP: f64 = -0.73;
    pub const CHI_QM: f64 = 1.27;
    pub const KERR_M: f64 = -0.12;
    pub const LAMB_SHIFT_M: f64 = 1.88;
    pub const DRESSED_ANHARMONICITY: f64 = -120.2;
    pub const DRESSED_QUBIT_FREQ: f64 = 7990.5;
    pub const PROBE_OCCUPANCY: f64 = 0.078;
    pub const OCCUPANCY_SLOPE: f64 = 0.16;
    pub const G_MC: f64 = 22.5;
    pub const GAMMA_M: f64 = 1.3;
    pub const CHI_QP_MEASURED: f64 = -0.8;
    pub const CHI_QM_MEASURED: f64 = 1.5;
    pub const SPLITTING: f64 = 2.6;
    pub const KERR_M_MEASURED: f64 = -0.20;
    pub const GAMMA_Q0: f64 = 0.25;
    pub const MEASURED_SLOPE: f64 = 0.342;
}

pub struct Context {
    pub file: ParameterFile,
    pub truncation: Truncation,
    pub fix: Overrides,
    pub grid: Overrides,
    pub report: Report,
}

pub struct PlotTable {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub struct Output {
    pub report: Report,
    pub table: Option<PlotTable>,
}

fn no_overrides(ctx: Context) -> Result<(ParameterFile, Truncation, Report), CliError> {
    ctx.fix.finish(&[])?;
    ctx.grid.finish(&[])?;
    Ok((ctx.file, ctx.truncation, ctx.report))
}

pub fn params(ctx: Context) -> Result<Output, CliError> {
    let (file, t, mut report) = no_overrides(ctx)?;
    let sp = file.system_params();
    let layout = sp.layout(t.cavity, t.transmon, t.magnon)?;
    report.setting("truncation", json!({ "cavity": t.cavity, "transmon": t.transmon, "magnon": t.magnon }));
    let d = hybrid::derive(&sp, &layout)?;
    let conv = hybrid::convergence_check(&sp, &layout)?;
    report.warnings.extend(d.warnings.iter().cloned());
    if conv.flagged {
        report.warnings.push(format!(
            "truncation not converged: largest relative change {:.3e} on enlarging each mode by one level",
            conv.max_relative_change
        ));
    }
    let changes: serde_json::Map<String, serde_json::Value> =
        conv.changes.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    report.results = json!({
        "derived": d,
        "convergence": {
            "relative_changes": changes,
            "max_relative_change": conv.max_relative_change,
            "flagged": conv.flagged,
        },
    });
    use reference as r;
    report.comparisons = vec![
        Comparison::new("g_qm", d.g_qm, r::G_QM),
        Comparison::new("chi_qp", d.chi_qp, r::CHI_QP),
        Comparison::new("chi_qm", d.chi_qm, r::CHI_QM),
        Comparison::new("kerr_m", d.kerr_m, r::KERR_M),
        Comparison::new("lamb_shift_m", d.lamb_shift_m, r::LAMB_SHIFT_M),
        Comparison::new("dressed_anharmonicity", d.dressed_anharmonicity, r::DRESSED_ANHARMONICITY),
        Comparison::new("dressed_qubit_freq", d.dressed_qubit_freq, r::DRESSED_QUBIT_FREQ),
    ];
    let rows = report
        .comparisons
        .iter()
        .map(|c| vec![c.quantity.clone(), cell(c.value), cell(c.reference), cell(c.deviation_percent)])
        .collect();
    let table = PlotTable { headers: vec!["quantity", "value_MHz", "reference_MHz", "deviation_percent"], rows };
    Ok(Output { report, table: Some(table) })
}

/// Magnon occupancy per fW at the configured drive detuning.
fn slope(file: &ParameterFile, delta_mw: f64) -> Result<f64, CliError> {
    Ok(io::occupancy_slope(&file.system_params(), file.magnon_linewidth()?, delta_mw)?)
}

pub fn spectrum(ctx: Context) -> Result<Output, CliError> {
    let Context { file, truncation, mut fix, mut grid, mut report } = ctx;
    let spec = file.spectroscopy()?;
    let exp = file.experiment()?;
    let sp = file.system_params();
    let gamma_m = file.magnon_linewidth()?;
    let (kappa_p, _) = file.linewidths(&sp.probe_mode)?;

    let chi_qm = match fix.take_scalar("chi_qm")? {
        Some(v) => v,
        None => match spec.chi_qm {
            Some(q) => q.value,
            None => hybrid::derive(&sp, &sp.layout(truncation.cavity, truncation.transmon, truncation.magnon)?)?.chi_qm,
        },
    };
    let delta = fix.take_or("delta_mw", exp.drive_detuning.value)?;
    let nbar = match fix.take_scalar("nbar_m")? {
        Some(v) => v,
        None => slope(&file, delta)? * exp.kittel_power.value / FEMTOWATT,
    };
    let omega_q = fix.take_or("omega_q", spec.qubit_freq.value)?;
    let gamma_q = fix.take_or("gamma_q", spec.qubit_linewidth.value)?;
    let photon_weight = fix.take_or("photon_weight", spec.photon_weight)?;
    let scale = fix.take_or("scale", 1.0)?;
    let offset = fix.take_or("offset", 0.0)?;
    fix.finish(&["chi_qm", "delta_mw", "nbar_m", "omega_q", "gamma_q", "photon_weight", "scale", "offset"])?;

    let omega = grid.take("omega").unwrap_or_else(|| range(omega_q - 5.0, omega_q + 15.0, 0.01));
    grid.finish(&["omega"])?;

    let mut magnon = SpectrumModel::from_occupancy(omega_q, gamma_q, chi_qm, gamma_m, delta, nbar)?;
    magnon.n_max = truncation.ladder;
    let model = CompositeModel {
        magnon,
        chi_qp: spec.chi_qp.value,
        kappa_p,
        probe_detuning: spec.probe_detuning.value,
        photon_weight,
        scale,
        offset,
    };
    let total = dispersive::composite_spectrum(&model, &omega)?;
    let comps = dispersive::spectrum_components(&model.magnon)?;
    let probs = dispersive::composite_probabilities(&model)?;
    let poisson = dispersive::poisson_reference(comps.d_ss, magnon.n_max)?;
    report.warnings.extend(probs.warnings.iter().cloned());
    report.results = json!({
        "model": model,
        "nbar_m": nbar,
        "spectroscopy_power_W": exp.spectroscopy_power.value,
        "components": comps,
        "probabilities": probs.probabilities,
        "poisson_reference": poisson,
    });

    let mut rows = Vec::new();
    for (w, s) in omega.iter().zip(&total) {
        rows.push(vec![cell(mhz_to_ghz(*w)), cell(*s), "total".into()]);
    }
    for n in 0..=magnon.n_max {
        let label = format!("n_m={n}");
        for &w in &omega {
            rows.push(vec![cell(mhz_to_ghz(w)), cell(scale * comps.component_at(n, w)), label.clone()]);
        }
    }
    let table = PlotTable { headers: vec!["omega_s_GHz", "re_delta_r", "series"], rows };
    Ok(Output { report, table: Some(table) })
}

/// (κ^int, κ^cpl) of the coupler mode.
fn coupler_rates(file: &ParameterFile) -> Result<(f64, f64), CliError> {
    let (k, cpl) = file.linewidths(&file.system.coupler_mode)?;
    Ok((k - cpl, cpl))
}

pub fn crossing(ctx: Context) -> Result<Output, CliError> {
    let Context { file, mut fix, mut grid, mut report, .. } = ctx;
    let cs = file.crossing()?;
    let coupler_freq = fix.take_or("coupler_freq", cs.coupler_freq.value)?;
    let coupling = fix.take_or("coupling", cs.coupling.value)?;
    let i0 = fix.take_or("resonance_current", cs.resonance_current.value)?;
    let tuning = fix.take_or("tuning", cs.tuning.0)?;
    let gamma_m = fix.take_or("gamma_m", file.magnon_linewidth()?)?;
    fix.finish(&["coupler_freq", "coupling", "resonance_current", "tuning", "gamma_m"])?;
    let (kappa_int, kappa_cpl) = coupler_rates(&file)?;

    let current = grid.take("current").unwrap_or_else(|| range(i0 - 1.0, i0 + 1.0, 0.02));
    let omega = grid
        .take("omega")
        .unwrap_or_else(|| range(coupler_freq - 4.0 * coupling, coupler_freq + 4.0 * coupling, 0.25));
    grid.finish(&["current", "omega"])?;

    let cp = CrossingParams::from_physical(coupler_freq, coupling, i0, tuning)?;
    let mut rows = Vec::with_capacity(current.len() * omega.len());
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &i in &current {
        let rp = ReflectionParams { coupler_freq, kappa_int, kappa_cpl, coupling, gamma_m, magnon_freq: cp.magnon_freq(i) };
        rp.validate()?;
        for &w in &omega {
            rows.push(vec![cell(i), cell(mhz_to_ghz(w)), cell(io::reflection(w, &rp).re)]);
        }
        let (a, b) = cp.branches(i);
        upper.push(a.max(b));
        lower.push(a.min(b));
    }
    report.results = json!({
        "crossing": cp,
        "kappa_int": kappa_int,
        "kappa_cpl": kappa_cpl,
        "gamma_m": gamma_m,
        "currents": current,
        "upper_branch": upper,
        "lower_branch": lower,
    });
    let table = PlotTable { headers: vec!["current_mA", "omega_r_GHz", "re_r"], rows };
    Ok(Output { report, table: Some(table) })
}

pub fn kerr_sweep(ctx: Context) -> Result<Output, CliError> {
    let Context { file, truncation, mut fix, mut grid, mut report } = ctx;
    let gamma_m = fix.take_or("gamma_m", file.magnon_linewidth()?)?;
    let delta = match fix.take_scalar("delta_mw")? {
        Some(v) => v,
        None => file.experiment()?.drive_detuning.value,
    };
    fix.finish(&["gamma_m", "delta_mw"])?;
    let kerr = grid.take("kerr").unwrap_or_else(|| vec![0.0, -0.1, -0.2, -0.3, -0.4]);
    let omega2 = grid.take("omega2").unwrap_or_else(|| range(0.0, 1.2, 0.06));
    grid.finish(&["kerr", "omega2"])?;
    if omega2.iter().any(|&x| x < 0.0) {
        return Err(CliError::input("--grid omega2 values must be >= 0"));
    }
    let drive: Vec<f64> = omega2.iter().map(|x| x.sqrt()).collect();
    let sweep = lindblad::kerr_sweep_from(gamma_m, delta, &kerr, &drive, truncation.fock)?;
    report.warnings.extend(sweep.warnings.iter().cloned());
    report.setting("fock_dim", truncation.fock);
    let mut rows = Vec::new();
    for (k, row) in kerr.iter().zip(&sweep.occupancy) {
        let label = format!("K={k}");
        for (x, n) in omega2.iter().zip(row) {
            rows.push(vec![cell(*x), cell(*n), label.clone()]);
        }
    }
    report.results = json!({ "omega2": omega2, "sweep": sweep });
    let table = PlotTable { headers: vec!["omega2_MHz2", "n_bar", "series"], rows };
    Ok(Output { report, table: Some(table) })
}

pub fn occupancy(ctx: Context) -> Result<Output, CliError> {
    let Context { file, truncation, mut fix, mut grid, mut report } = ctx;
    let exp = file.experiment()?;
    let sp = file.system_params();
    let (kappa_p, kappa_p_cpl) = file.linewidths(&sp.probe_mode)?;
    let gamma_m = fix.take_or("gamma_m", file.magnon_linewidth()?)?;
    let delta = fix.take_or("delta_mw", exp.drive_detuning.value)?;
    let kerr_override = fix.take_scalar("kerr")?;
    fix.finish(&["gamma_m", "delta_mw", "kerr"])?;
    let powers = grid.take("power").unwrap_or_else(|| range(0.0, 3.2, 0.1));
    grid.finish(&["power"])?;
    if powers.iter().any(|&p| p < 0.0) {
        return Err(CliError::input("--grid power values must be >= 0"));
    }

    let n_p = io::probe_occupancy(exp.readout_power.value, exp.readout_freq.value, kappa_p_cpl, kappa_p)?;
    let omega_mw = io::drive_frequency(&sp, delta)?;
    let drive_1fw = io::kittel_drive_strength(FEMTOWATT, &sp, omega_mw, io::DEFAULT_DRIVE_MODES)?;
    let slope = io::linear_occupancy(drive_1fw, gamma_m, delta)?;
    let bounds = match &file.uncertainty {
        Some(u) => Some(io::occupancy_slope_bounds(&sp, gamma_m, delta, &u.slope())?),
        None => None,
    };
    let kerr = match kerr_override {
        Some(k) => k,
        None => hybrid::derive(&sp, &sp.layout(truncation.cavity, truncation.transmon, truncation.magnon)?)?.kerr_m,
    };
    let drive: Vec<f64> = powers.iter().map(|p| drive_1fw * p.sqrt()).collect();
    let sweep = lindblad::kerr_sweep_from(gamma_m, delta, &[kerr], &drive, truncation.fock)?;
    report.warnings.extend(sweep.warnings.iter().cloned());

    let at_power = exp.kittel_power.value / FEMTOWATT;
    report.results = json!({
        "probe_occupancy": n_p,
        "readout_power_W": exp.readout_power.value,
        "drive_frequency_MHz": omega_mw,
        "drive_strength_per_sqrt_fW": drive_1fw,
        "slope_per_fW": slope,
        "slope_bounds": bounds,
        "kerr_m": kerr,
        "kittel_power_fW": at_power,
        "linear_occupancy_at_kittel_power": slope * at_power,
        "powers_fW": powers,
        "kerr_occupancy": sweep.occupancy[0],
    });
    report.comparisons = vec![
        Comparison::new("probe_occupancy", n_p, reference::PROBE_OCCUPANCY),
        Comparison::new("slope_per_fW", slope, reference::OCCUPANCY_SLOPE),
    ];
    let mut rows = Vec::new();
    for (p, _) in powers.iter().zip(&drive) {
        rows.push(vec![cell(*p), cell(slope * p), "linear".into()]);
    }
    for (p, n) in powers.iter().zip(&sweep.occupancy[0]) {
        rows.push(vec![cell(*p), cell(*n), format!("kerr K={kerr}")]);
    }
    let table = PlotTable { headers: vec!["p_mw_fW", "n_bar", "series"], rows };
    Ok(Output { report, table: Some(table) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitKind {
    Crossing,
    Reflection,
    QubitVacuum,
    QubitMagnon,
    Broadening,
    Kerr,
    Linear,
}

/// Data rows with the fitted curve alongside.
fn fit_rows(x: &[f64], y: &[f64], model: &[f64]) -> Vec<Vec<String>> {
    x.iter().zip(y).zip(model).map(|((a, b), c)| vec![cell(*a), cell(*b), cell(*c)]).collect()
}

fn read(text: &str, schema: &[&str], optional: &[&str]) -> Result<Table, CliError> {
    data::read_table(text, schema, optional)
}

pub fn fit(kind: FitKind, data_text: &str, ctx: Context) -> Result<Output, CliError> {
    match kind {
        FitKind::Crossing => fit_crossing(data_text, ctx),
        FitKind::Reflection => fit_reflection(data_text, ctx),
        FitKind::QubitVacuum => fit_vacuum(data_text, ctx),
        FitKind::QubitMagnon => fit_magnon(data_text, ctx),
        FitKind::Broadening => fit_broadening(data_text, ctx),
        FitKind::Kerr => fit_kerr(data_text, ctx),
        FitKind::Linear => fit_linear(data_text, ctx),
    }
}

fn fit_crossing(text: &str, ctx: Context) -> Result<Output, CliError> {
    let Context { fix, grid, mut report, .. } = ctx;
    grid.finish(&[])?;
    let t = read(text, data::CROSSING, &[])?;
    let current = t.column(0);
    let freq: Vec<f64> = t.column(1).iter().map(|&f| ghz_to_mhz(f)).collect();
    let f = fitting::fit_crossing(current, &freq, &fix.into_pairs())?;
    report.warnings.extend(f.warnings.iter().cloned());
    report.comparisons = vec![Comparison::new("coupling", f.coupling, reference::G_MC)];
    let model: Vec<f64> = current.iter().map(|&i| mhz_to_ghz(io::crossing_branch(i, &f.params))).collect();
    let rows = fit_rows(current, t.column(1), &model);
    report.results = to_value(&f);
    let table = PlotTable { headers: vec!["current_mA", "omega_GHz", "fit_GHz"], rows };
    Ok(Output { report, table: Some(table) })
}

fn fit_reflection(text: &str, ctx: Context) -> Result<Output, CliError> {
    let Context { file, fix, grid, mut report, .. } = ctx;
    grid.finish(&[])?;
    let t = read(text, data::REFLECTION, &[])?;
    let mut spectra: Vec<ReflectionSpectrum> = Vec::new();
    for k in 0..t.len() {
        let (i, w, r) = (t.column(0)[k], ghz_to_mhz(t.column(1)[k]), t.column(2)[k]);
        match spectra.iter_mut().find(|s| s.current == i) {
            Some(s) => {
                s.omega.push(w);
                s.re_r.push(r);
            }
            None => spectra.push(ReflectionSpectrum { current: i, omega: vec![w], re_r: vec![r] }),
        }
    }
    let (kappa_int, kappa_cpl) = coupler_rates(&file)?;
    let cc = CouplerConstants { coupler_freq: file.crossing()?.coupler_freq.value, kappa_int, kappa_cpl };
    let f = fitting::fit_reflection_global(&spectra, &cc, None, &fix.into_pairs())?;
    report.warnings.extend(f.warnings.iter().cloned());
    report.setting("coupler", cc);
    report.comparisons = vec![
        Comparison::new("coupling", f.coupling, reference::G_MC),
        Comparison::new("gamma_m", f.gamma_m, reference::GAMMA_M),
    ];
    let mut rows = Vec::new();
    for (s, &wm) in spectra.iter().zip(&f.magnon_freqs) {
        let rp = ReflectionParams { coupler_freq: cc.coupler_freq, kappa_int, kappa_cpl, coupling: f.coupling, gamma_m: f.gamma_m, magnon_freq: wm };
        for (w, r) in s.omega.iter().zip(&s.re_r) {
            rows.push(vec![cell(s.current), cell(mhz_to_ghz(*w)), cell(*r), cell(io::reflection(*w, &rp).re)]);
        }
    }
    report.results = to_value(&f);
    let table = PlotTable { headers: vec!["current_mA", "omega_r_GHz", "re_r", "fit"], rows };
    Ok(Output { report, table: Some(table) })
}

fn spectrum_data(text: &str) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), CliError> {
    let t = read(text, data::QUBIT_SPECTRUM, &[])?;
    let omega: Vec<f64> = t.column(0).iter().map(|&f| ghz_to_mhz(f)).collect();
    Ok((t.column(0).to_vec(), omega, t.column(1).to_vec()))
}

fn fit_vacuum(text: &str, ctx: Context) -> Result<Output, CliError> {
    let Context { file, fix, grid, mut report, .. } = ctx;
    grid.finish(&[])?;
    let (ghz, omega, y) = spectrum_data(text)?;
    let (kappa_p, _) = file.linewidths(&file.system.probe_mode)?;
    let f = fitting::fit_qubit_spectrum_vacuum(&omega, &y, kappa_p, &fix.into_pairs())?;
    report.warnings.extend(f.fit.warnings.iter().cloned());
    report.setting("kappa_p", kappa_p);
    report.comparisons = vec![Comparison::new("chi_qp", f.chi_qp, reference::CHI_QP_MEASURED)];
    let m = SpectrumModel::from_occupancy(f.omega_q, f.gamma_q, f.chi_qp, kappa_p, 0.0, f.nbar_p)?;
    let model: Vec<f64> = dispersive::spectrum(&m, &omega)?.total.iter().map(|v| f.scale * v + f.offset).collect();
    report.results = to_value(&f);
    let table = PlotTable { headers: vec!["omega_s_GHz", "re_delta_r", "fit"], rows: fit_rows(&ghz, &y, &model) };
    Ok(Output { report, table: Some(table) })
}

fn fit_magnon(text: &str, ctx: Context) -> Result<Output, CliError> {
    let Context { file, fix, grid, mut report, .. } = ctx;
    grid.finish(&[])?;
    let (ghz, omega, y) = spectrum_data(text)?;
    let spec = file.spectroscopy()?;
    let (kappa_p, _) = file.linewidths(&file.system.probe_mode)?;
    let c = MagnonFitConstants {
        omega_q: spec.qubit_freq.value,
        gamma_q: spec.qubit_linewidth.value,
        gamma_m: file.magnon_linewidth()?,
        photon_weight: spec.photon_weight,
        chi_qp: spec.chi_qp.value,
        kappa_p,
        probe_detuning: spec.probe_detuning.value,
    };
    report.setting("constants", c);
    let f = fitting::fit_qubit_spectrum_magnon(&omega, &y, &c, &fix.into_pairs())?;
    report.warnings.extend(f.warnings.iter().cloned());
    report.comparisons = vec![
        Comparison::new("chi_qm", f.chi_qm, reference::CHI_QM_MEASURED),
        Comparison::new("splitting", f.splitting, reference::SPLITTING),
    ];
    let magnon = SpectrumModel::from_occupancy(c.omega_q, c.gamma_q, f.chi_qm, c.gamma_m, f.delta_mw, f.nbar_m)?;
    let model = CompositeModel {
        magnon,
        chi_qp: c.chi_qp,
        kappa_p,
        probe_detuning: c.probe_detuning,
        photon_weight: c.photon_weight,
        scale: f.scale,
        offset: f.offset,
    };
    let curve = dispersive::composite_spectrum(&model, &omega)?;
    let d_ss = dispersive::spectrum_components(&magnon)?.d_ss;
    let poisson = dispersive::poisson_reference(d_ss, magnon.n_max)?;
    let mut results = to_value(&f);
    results["poisson_reference"] = to_value(&poisson);
    report.results = results;
    let table = PlotTable { headers: vec!["omega_s_GHz", "re_delta_r", "fit"], rows: fit_rows(&ghz, &y, &curve) };
    Ok(Output { report, table: Some(table) })
}

fn fit_broadening(text: &str, ctx: Context) -> Result<Output, CliError> {
    let Context { file, fix, grid, mut report, .. } = ctx;
    grid.finish(&[])?;
    let t = read(text, data::BROADENING, &[])?;
    let power: Vec<f64> = t.column(0).iter().map(|p| p * ATTOWATT).collect();
    let t1 = file.experiment()?.t1.value;
    let f = fitting::fit_power_broadening(&power, t.column(1), t1, &fix.into_pairs())?;
    report.warnings.extend(f.fit.warnings.iter().cloned());
    if f.at_floor {
        report.warnings.push(format!("gamma0 sits at the 1/(2πT1) floor of {:.4} MHz", f.floor));
    }
    report.comparisons = vec![Comparison::new("gamma0", f.gamma0, reference::GAMMA_Q0)];
    let model: Vec<f64> = power.iter().map(|p| (f.eta * p + f.gamma0 * f.gamma0).sqrt()).collect();
    report.results = to_value(&f);
    let table = PlotTable { headers: vec!["p_s_aW", "gamma_MHz", "fit"], rows: fit_rows(t.column(0), t.column(1), &model) };
    Ok(Output { report, table: Some(table) })
}

fn occupancy_points(text: &str) -> Result<Vec<OccupancyPoint>, CliError> {
    let t = read(text, data::OCCUPANCY, &["ci"])?;
    Ok((0..t.len())
        .map(|k| {
            let ci = t.column(2)[k];
            OccupancyPoint {
                power: t.column(0)[k] * FEMTOWATT,
                occupancy: t.column(1)[k],
                ci: (!ci.is_nan()).then(|| (t.column(1)[k] - ci, t.column(1)[k] + ci)),
            }
        })
        .collect())
}

fn fit_kerr(text: &str, ctx: Context) -> Result<Output, CliError> {
    let Context { file, mut fix, mut grid, mut report, .. } = ctx;
    let points = occupancy_points(text)?;
    let gamma_m = fix.take_or("gamma_m", file.magnon_linewidth()?)?;
    let delta = match fix.take_scalar("delta_mw")? {
        Some(v) => v,
        None => file.experiment()?.drive_detuning.value,
    };
    fix.finish(&["gamma_m", "delta_mw"])?;

    let mut g = KerrGrid::default();
    if let Some(k) = grid.take("kerr") {
        if k.len() < 2 {
            return Err(CliError::input("--grid kerr needs a start:stop:step range"));
        }
        g.kerr_min = k[0].min(k[k.len() - 1]);
        g.kerr_max = k[0].max(k[k.len() - 1]);
        g.kerr_step = (k[1] - k[0]).abs();
    }
    if let Some(v) = grid.take_scalar("steps")? {
        g.proportionality_steps = v as usize;
    }
    g.proportionality_span = grid.take_or("span", g.proportionality_span)?;
    if let Some(v) = grid.take_scalar("samples")? {
        g.drive_samples = v as usize;
    }
    grid.finish(&["kerr", "steps", "span", "samples"])?;
    report.setting("grid", g);

    let extremes = file.uncertainty.as_ref().map(|u| KerrExtremes {
        gamma_m: (gamma_m - u.magnon_linewidth.value, gamma_m + u.magnon_linewidth.value),
        delta_mw: (delta - u.drive_detuning.value, delta + u.drive_detuning.value),
    });
    let f = lindblad::fit_kerr(&points, gamma_m, delta, &g, extremes.as_ref())?;
    report.warnings.extend(f.warnings.iter().cloned());
    report.comparisons = vec![Comparison::new("kerr_m", f.kerr, reference::KERR_M_MEASURED)];
    // Best-fit curve at the data powers.
    let model = points
        .iter()
        .map(|p| {
            let m = KerrModel::new(delta, f.kerr, (f.proportionality * p.power).sqrt(), gamma_m);
            lindblad::steady_state(&m).map(|s| s.occupancy)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let mut results = to_value(&f);
    results["model_occupancy"] = to_value(&model);
    results["proportionality_MHz2_per_fW"] = to_value(f.proportionality * FEMTOWATT);
    report.results = results;
    let mut rows = Vec::new();
    for (k, row) in f.kerr_values.iter().zip(&f.surface) {
        for (p, r2) in f.proportionality_values.iter().zip(row) {
            rows.push(vec![cell(*k), cell(p * FEMTOWATT), cell(*r2)]);
        }
    }
    let table = PlotTable { headers: vec!["kerr_MHz", "proportionality_MHz2_per_fW", "r_squared"], rows };
    Ok(Output { report, table: Some(table) })
}

fn fit_linear(text: &str, ctx: Context) -> Result<Output, CliError> {
    let Context { mut fix, grid, mut report, .. } = ctx;
    grid.finish(&[])?;
    let zero_intercept = match fix.take_scalar("intercept")? {
        None => false,
        Some(0.0) => true,
        Some(v) => return Err(CliError::input(format!("--fix intercept only accepts 0, got {v}"))),
    };
    fix.finish(&["intercept"])?;
    let points = occupancy_points(text)?;
    let x: Vec<f64> = points.iter().map(|p| p.power / FEMTOWATT).collect();
    let y: Vec<f64> = points.iter().map(|p| p.occupancy).collect();
    let f = fitting::fit_linear(&x, &y, zero_intercept)?;
    report.warnings.extend(f.fit.warnings.iter().cloned());
    report.setting("zero_intercept", zero_intercept);
    report.comparisons = vec![Comparison::new("slope_per_fW", f.slope, reference::MEASURED_SLOPE)];
    let model: Vec<f64> = x.iter().map(|v| f.slope * v + f.intercept).collect();
    report.results = to_value(&f);
    let table = PlotTable { headers: vec!["p_mw_fW", "n_bar", "fit"], rows: fit_rows(&x, &y, &model) };
    Ok(Output { report, table: Some(table) })
}
