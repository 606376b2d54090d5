//! TOML parameter files.
//!
//! Every dimensional value carries a unit suffix; frequencies are ω/2π.
//! Only `[system]` is required; commands that need another section report
//! it by name when it is missing.

use serde::Deserialize;

use magnonics::hybrid::{CavityMode, SystemParams};
use magnonics::io::SlopeUncertainty;

use crate::error::CliError;
use crate::units::{Current, Frequency, Power, Quantity, Time, TuningRate};

type Freq = Quantity<Frequency>;

/// Tolerance on a stated internal loss against linewidth minus coupling rate (MHz).
const INTERNAL_LOSS_TOL: f64 = 0.025;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterFile {
    pub system: SystemSection,
    pub experiment: Option<ExperimentSection>,
    pub spectroscopy: Option<SpectroscopySection>,
    pub crossing: Option<CrossingSection>,
    #[serde(default)]
    pub truncation: Truncation,
    pub uncertainty: Option<UncertaintySection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityModeEntry {
    pub label: String,
    pub bare_freq: Freq,
    pub qubit_coupling: Freq,
    pub magnon_coupling: Freq,
    pub linewidth: Option<Freq>,
    pub coupling_rate: Option<Freq>,
    /// Informational; checked against `linewidth - coupling_rate`.
    pub internal_loss: Option<Freq>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub qubit_bare_freq: Freq,
    pub bare_anharmonicity: Freq,
    pub magnon_bare_freq: Freq,
    pub qubit_linewidth: Option<Freq>,
    pub magnon_linewidth: Option<Freq>,
    pub probe_mode: String,
    pub coupler_mode: String,
    pub measured_coupling_qm: Option<Freq>,
    pub cavity_modes: Vec<CavityModeEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub readout_power: Quantity<Power>,
    pub readout_freq: Freq,
    pub spectroscopy_power: Quantity<Power>,
    pub kittel_power: Quantity<Power>,
    /// Δ_mw = ω_m^g − ω_mw.
    pub drive_detuning: Freq,
    pub t1: Quantity<Time>,
}

/// Constants held fixed in qubit-spectrum models.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectroscopySection {
    /// ω_q with the probe and Kittel modes in vacuum.
    pub qubit_freq: Freq,
    /// Power-broadened γ_q at the spectroscopy power.
    pub qubit_linewidth: Freq,
    /// Relative weight of the one-photon probe peak.
    pub photon_weight: f64,
    pub chi_qp: Freq,
    /// Measured χ_q-m; the diagonalized value is used when absent.
    pub chi_qm: Option<Freq>,
    #[serde(default = "zero_freq")]
    pub probe_detuning: Freq,
}

fn zero_freq() -> Freq {
    Quantity::new(0.0)
}

/// Coupler/Kittel avoided crossing.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossingSection {
    /// Coupler frequency bare of the magnon.
    pub coupler_freq: Freq,
    pub coupling: Freq,
    pub resonance_current: Quantity<Current>,
    /// dω_m/dI.
    pub tuning: TuningRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Truncation {
    pub cavity: usize,
    pub transmon: usize,
    pub magnon: usize,
    /// Fock dimension of the Kerr oscillator.
    pub fock: usize,
    /// Highest number state in the qubit-spectrum ladder.
    pub ladder: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { cavity: 3, transmon: 3, magnon: 3, fock: 30, ladder: 10 }
    }
}

impl Truncation {
    /// Apply `key=value,...` overrides.
    pub fn apply(&mut self, spec: &str) -> Result<(), CliError> {
        for (key, value) in parse_pairs(spec, "--truncation")? {
            let v: usize = value
                .parse()
                .map_err(|_| CliError::input(format!("--truncation {key}: `{value}` is not a positive integer")))?;
            if v == 0 {
                return Err(CliError::input(format!("--truncation {key} must be > 0")));
            }
            match key.as_str() {
                "cavity" => self.cavity = v,
                "transmon" => self.transmon = v,
                "magnon" => self.magnon = v,
                "fock" => self.fock = v,
                "ladder" => self.ladder = v,
                other => {
                    return Err(CliError::input(format!(
                        "--truncation: unknown key `{other}` (expected cavity, transmon, magnon, fock, ladder)"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// 95% half-widths used for bounds.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    pub coupler_coupling_rate: Freq,
    pub probe_coupling_rate: Freq,
    pub magnon_linewidth: Freq,
    pub drive_detuning: Freq,
}

impl UncertaintySection {
    pub fn slope(&self) -> SlopeUncertainty {
        SlopeUncertainty {
            coupler_cpl: self.coupler_coupling_rate.value,
            probe_cpl: self.probe_coupling_rate.value,
            gamma_m: self.magnon_linewidth.value,
            delta_mw: self.drive_detuning.value,
        }
    }
}

/// `a=1,b=2` into pairs.
pub fn parse_pairs(spec: &str, flag: &str) -> Result<Vec<(String, String)>, CliError> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            item.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::input(format!("{flag}: expected key=value, got `{item}`")))
        })
        .collect()
}

fn missing(section: &str) -> CliError {
    CliError::input(format!("parameter file has no [{section}] section, which this command needs"))
}

impl ParameterFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ParameterFile = toml::from_str(text).map_err(|e| CliError::input(format!("parameter file: {e}")))?;
        file.check()?;
        Ok(file)
    }

    fn check(&self) -> Result<(), CliError> {
        for m in &self.system.cavity_modes {
            if let Some(stated) = m.internal_loss {
                let (Some(k), Some(c)) = (m.linewidth, m.coupling_rate) else {
                    return Err(CliError::input(format!(
                        "cavity mode `{}`: internal_loss needs linewidth and coupling_rate",
                        m.label
                    )));
                };
                let derived = k.value - c.value;
                if (stated.value - derived).abs() > INTERNAL_LOSS_TOL {
                    return Err(CliError::input(format!(
                        "cavity mode `{}`: internal_loss {} MHz disagrees with linewidth - coupling_rate = {derived} MHz",
                        m.label, stated.value
                    )));
                }
            }
        }
        if let Some(s) = &self.spectroscopy {
            if !(s.photon_weight >= 0.0) || !s.photon_weight.is_finite() {
                return Err(CliError::input("spectroscopy.photon_weight must be finite and >= 0"));
            }
        }
        self.system_params().validate()?;
        Ok(())
    }

    pub fn system_params(&self) -> SystemParams {
        let s = &self.system;
        SystemParams {
            cavity_modes: s
                .cavity_modes
                .iter()
                .map(|m| CavityMode {
                    label: m.label.clone(),
                    bare_freq: m.bare_freq.value,
                    qubit_coupling: m.qubit_coupling.value,
                    magnon_coupling: m.magnon_coupling.value,
                    linewidth: m.linewidth.map(|q| q.value),
                    coupling_rate: m.coupling_rate.map(|q| q.value),
                })
                .collect(),
            qubit_bare_freq: s.qubit_bare_freq.value,
            bare_anharmonicity: s.bare_anharmonicity.value,
            magnon_bare_freq: s.magnon_bare_freq.value,
            qubit_linewidth: s.qubit_linewidth.map(|q| q.value),
            magnon_linewidth: s.magnon_linewidth.map(|q| q.value),
            probe_mode: s.probe_mode.clone(),
            coupler_mode: s.coupler_mode.clone(),
            measured_coupling_qm: s.measured_coupling_qm.map(|q| q.value),
        }
    }

    pub fn experiment(&self) -> Result<&ExperimentSection, CliError> {
        self.experiment.as_ref().ok_or_else(|| missing("experiment"))
    }

    pub fn spectroscopy(&self) -> Result<&SpectroscopySection, CliError> {
        self.spectroscopy.as_ref().ok_or_else(|| missing("spectroscopy"))
    }

    pub fn crossing(&self) -> Result<&CrossingSection, CliError> {
        self.crossing.as_ref().ok_or_else(|| missing("crossing"))
    }

    pub fn magnon_linewidth(&self) -> Result<f64, CliError> {
        self.system
            .magnon_linewidth
            .map(|q| q.value)
            .ok_or_else(|| CliError::input("system.magnon_linewidth is required by this command"))
    }

    /// (κ, κ^cpl) of a cavity mode.
    pub fn linewidths(&self, label: &str) -> Result<(f64, f64), CliError> {
        let p = self.system_params();
        let m = p.cavity(label)?;
        match (m.linewidth, m.coupling_rate) {
            (Some(k), Some(c)) => Ok((k, c)),
            _ => Err(CliError::input(format!(
                "cavity mode `{label}` needs linewidth and coupling_rate for this command"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
qubit_bare_freq = "8040.6 MHz"
bare_anharmonicity = "-137.2 MHz"
magnon_bare_freq = "7951.5 MHz"
probe_mode = "p"
coupler_mode = "c"

[[system.cavity_modes]]
label = "c"
bare_freq = "8.4145 GHz"
qubit_coupling = "126.1 MHz"
magnon_coupling = "22.5 MHz"
linewidth = "2.08 MHz"
coupling_rate = "0.51 MHz"
internal_loss = "1.58 MHz"

[[system.cavity_modes]]
label = "p"
bare_freq = "10441.5 MHz"
qubit_coupling = "135.4 MHz"
magnon_coupling = "-20.3 MHz"
"#;

    #[test]
    fn minimal_file_parses() {
        let f = ParameterFile::parse(MINIMAL).unwrap();
        let p = f.system_params();
        assert!((p.cavity_modes[0].bare_freq - 8414.5).abs() < 1e-9);
        assert_eq!(f.truncation, Truncation::default());
        assert!(f.experiment().unwrap_err().to_string().contains("[experiment]"));
    }

    #[test]
    fn errors_name_the_key() {
        let no_key = MINIMAL.replace("magnon_bare_freq = \"7951.5 MHz\"\n", "");
        let e = ParameterFile::parse(&no_key).unwrap_err().to_string();
        assert!(e.contains("magnon_bare_freq"), "{e}");

        let unknown = MINIMAL.replace("probe_mode", "colour = \"red\"\nprobe_mode");
        let e = ParameterFile::parse(&unknown).unwrap_err().to_string();
        assert!(e.contains("colour"), "{e}");

        let bare = MINIMAL.replace("\"8040.6 MHz\"", "8040.6");
        let e = ParameterFile::parse(&bare).unwrap_err().to_string();
        assert!(e.contains("qubit_bare_freq") && e.contains("unit"), "{e}");
    }

    #[test]
    fn inconsistent_internal_loss_rejected() {
        let bad = MINIMAL.replace("\"1.58 MHz\"", "\"1.2 MHz\"");
        assert!(ParameterFile::parse(&bad).unwrap_err().to_string().contains("internal_loss"));
    }

    #[test]
    fn truncation_overrides() {
        let mut t = Truncation::default();
        t.apply("cavity=4, fock=40").unwrap();
        assert_eq!((t.cavity, t.fock, t.magnon), (4, 40, 3));
        assert!(t.apply("qubit=2").is_err());
        assert!(t.apply("fock=0").is_err());
        assert!(t.apply("fock").is_err());
    }
}
