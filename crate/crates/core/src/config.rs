//! Experiment definitions in TOML.
//!
//! Frequencies are entered as `ω/2π` (kHz or MHz), times in µs, masses in amu.
//! A named preset replaces every block it defines.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adiabatic::{
    RampSchedule, StepControl, DEFAULT_B_END_FRACTION, DEFAULT_DURATION, DEFAULT_MAX_STEP, DEFAULT_MIN_STEP, DEFAULT_TOL,
};
use crate::coupling::{diagram_preset, CouplingMatrix, RamanDrive, DEFAULT_EDGE_THRESHOLD, DIAGRAM_J0_KHZ, DIAGRAM_PRESETS};
use crate::error::{Error, Result};
use crate::measure::Basis;
use crate::trap::{trap_preset, TrapParams, DEFAULT_RESTARTS, TRAP_PRESETS};
use crate::units::{khz, mhz, ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE, YB171_MASS_AMU};

/// Raman wavelength used for the default net wavevector, m.
pub const DEFAULT_WAVELENGTH: f64 = 355e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    pub omega_x_khz: f64,
    pub omega_y_khz: f64,
    pub omega_z_khz: f64,
    pub n_ions: usize,
    #[serde(default = "default_mass")]
    pub mass_amu: f64,
    #[serde(default = "default_charge")]
    pub charge_e: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_mass() -> f64 {
    YB171_MASS_AMU
}
fn default_charge() -> f64 {
    1.0
}
fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

impl TrapConfig {
    pub fn params(&self) -> Result<TrapParams> {
        TrapParams::new(
            khz(self.omega_x_khz),
            khz(self.omega_y_khz),
            khz(self.omega_z_khz),
            self.mass_amu * ATOMIC_MASS_UNIT,
            self.charge_e * ELEMENTARY_CHARGE,
        )
    }

    fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("omega_x_khz", self.omega_x_khz),
            ("omega_y_khz", self.omega_y_khz),
            ("omega_z_khz", self.omega_z_khz),
            ("mass_amu", self.mass_amu),
            ("charge_e", self.charge_e),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("trap.{key}"), "must be a positive number"));
            }
        }
        if self.n_ions == 0 {
            return Err(Error::validation("trap.n_ions", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::validation("trap.restarts", "must be at least 1"));
        }
        self.params()?.check_planar()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rabi {
    Uniform(f64),
    PerIon(Vec<f64>),
}

/// Where the coupling matrix comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingSource {
    /// Phonon-mediated couplings of the trap's crystal.
    Phonon,
    /// A named interaction diagram.
    Diagram,
    /// `j_khz` given directly.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    #[serde(default = "default_source")]
    pub source: CouplingSource,
    /// Ω/2π, kHz.
    #[serde(default)]
    pub rabi_khz: Option<Rabi>,
    /// μ/2π, MHz.
    #[serde(default)]
    pub mu_mhz: Option<f64>,
    /// ħδk²/(2M)/2π, kHz; derived from a 355 nm orthogonal beam pair when absent.
    #[serde(default)]
    pub recoil_khz: Option<f64>,
    #[serde(default = "default_guard")]
    pub resonance_guard_khz: f64,
    #[serde(default)]
    pub sign_flip: bool,
    #[serde(default)]
    pub diagram: Option<String>,
    #[serde(default = "default_j0")]
    pub j0_khz: f64,
    /// J/2π, kHz.
    #[serde(default)]
    pub j_khz: Option<Vec<Vec<f64>>>,
}

fn default_source() -> CouplingSource {
    CouplingSource::Phonon
}
fn default_guard() -> f64 {
    1.0
}
fn default_j0() -> f64 {
    DIAGRAM_J0_KHZ
}

impl Default for DriveConfig {
    fn default() -> Self {
        DriveConfig {
            source: CouplingSource::Phonon,
            rabi_khz: None,
            mu_mhz: None,
            recoil_khz: None,
            resonance_guard_khz: default_guard(),
            sign_flip: false,
            diagram: None,
            j0_khz: default_j0(),
            j_khz: None,
        }
    }
}

impl DriveConfig {
    /// Raman drive for the phonon source.
    pub fn raman(&self, n_ions: usize, trap: &TrapParams) -> Result<RamanDrive> {
        let rabi = match &self.rabi_khz {
            Some(Rabi::Uniform(w)) => vec![khz(*w); n_ions],
            Some(Rabi::PerIon(v)) => {
                if v.len() != n_ions {
                    return Err(Error::validation(
                        "drive.rabi_khz",
                        format!("expected {n_ions} values, got {}", v.len()),
                    ));
                }
                v.iter().map(|w| khz(*w)).collect()
            }
            None => return Err(Error::validation("drive.rabi_khz", "required for the phonon source")),
        };
        let mu = self
            .mu_mhz
            .ok_or_else(|| Error::validation("drive.mu_mhz", "required for the phonon source"))?;
        let mut drive = match self.recoil_khz {
            Some(r) => RamanDrive::new(rabi, mhz(mu), khz(r))?,
            None => {
                let delta_k = std::f64::consts::SQRT_2 * 2.0 * std::f64::consts::PI / DEFAULT_WAVELENGTH;
                RamanDrive::from_wavevector(rabi, mhz(mu), delta_k, trap.ion_mass)?
            }
        };
        drive.resonance_guard = khz(self.resonance_guard_khz);
        drive.validate()?;
        Ok(drive)
    }

    pub fn explicit_couplings(&self) -> Result<CouplingMatrix> {
        let rows = self
            .j_khz
            .as_ref()
            .ok_or_else(|| Error::validation("drive.j_khz", "required for the explicit source"))?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::validation("drive.j_khz", "matrix must be square"));
        }
        CouplingMatrix::from_rows(rows.iter().map(|r| r.iter().map(|v| khz(*v)).collect()).collect())
            .map_err(|e| Error::validation("drive.j_khz", e.to_string()))
    }

    fn validate(&self, trap: Option<&TrapConfig>) -> Result<()> {
        if !(self.resonance_guard_khz.is_finite() && self.resonance_guard_khz >= 0.0) {
            return Err(Error::validation("drive.resonance_guard_khz", "must be >= 0"));
        }
        match self.source {
            CouplingSource::Phonon => {
                let trap = trap.ok_or_else(|| Error::validation("trap", "the phonon source needs a trap block"))?;
                self.raman(trap.n_ions, &trap.params()?).map(|_| ())
            }
            CouplingSource::Diagram => {
                if !(self.j0_khz.is_finite() && self.j0_khz > 0.0) {
                    return Err(Error::validation("drive.j0_khz", "must be positive"));
                }
                let name = self
                    .diagram
                    .as_deref()
                    .ok_or_else(|| Error::validation("drive.diagram", "required for the diagram source"))?;
                diagram_preset(name).map_err(|_| Error::validation("drive.diagram", format!("unknown diagram `{name}`")))?;
                Ok(())
            }
            CouplingSource::Explicit => self.explicit_couplings().map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// b0/2π, kHz.
    #[serde(default = "default_b0")]
    pub b0_khz: f64,
    #[serde(default = "default_duration")]
    pub duration_us: f64,
    #[serde(default = "default_end_fraction")]
    pub b_end_fraction: f64,
    /// Multiplies the duration with the end field held fixed.
    #[serde(default = "default_one")]
    pub slowdown: f64,
    /// Number of uniformly spaced trajectory samples, endpoints included.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_step")]
    pub max_step_us: f64,
}

fn default_b0() -> f64 {
    29.0
}
fn default_duration() -> f64 {
    DEFAULT_DURATION * 1e6
}
fn default_end_fraction() -> f64 {
    DEFAULT_B_END_FRACTION
}
fn default_one() -> f64 {
    1.0
}
fn default_samples() -> usize {
    61
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_step() -> f64 {
    DEFAULT_MAX_STEP * 1e6
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            b0_khz: default_b0(),
            duration_us: default_duration(),
            b_end_fraction: default_end_fraction(),
            slowdown: 1.0,
            samples: default_samples(),
            tol: default_tol(),
            max_step_us: default_max_step(),
        }
    }
}

impl ScheduleConfig {
    pub fn schedule(&self) -> Result<RampSchedule> {
        if !(self.b0_khz.is_finite() && self.b0_khz > 0.0) {
            return Err(Error::validation("schedule.b0_khz", "must be positive"));
        }
        if !(self.slowdown.is_finite() && self.slowdown > 0.0) {
            return Err(Error::validation("schedule.slowdown", "must be positive"));
        }
        Ok(RampSchedule::from_end_fraction(khz(self.b0_khz), self.duration_us * 1e-6, self.b_end_fraction)?.slowed(self.slowdown))
    }

    pub fn step_control(&self) -> Result<StepControl> {
        let c = StepControl {
            max_step: self.max_step_us * 1e-6,
            tol: self.tol,
            min_step: DEFAULT_MIN_STEP.min(self.max_step_us * 1e-6),
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::validation("schedule.samples", "need at least the two endpoints"));
        }
        self.schedule()?;
        self.step_control()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_basis")]
    pub basis: Basis,
    #[serde(default)]
    pub shots: usize,
    #[serde(default)]
    pub prep_error: f64,
    /// Defaults to the top-level seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_edge_threshold")]
    pub edge_threshold: f64,
    #[serde(default = "default_gap_samples")]
    pub gap_samples: usize,
    #[serde(default = "default_gap_levels")]
    pub gap_levels: usize,
    #[serde(default = "default_true")]
    pub reverse: bool,
}

fn default_basis() -> Basis {
    Basis::Y
}
fn default_edge_threshold() -> f64 {
    DEFAULT_EDGE_THRESHOLD
}
fn default_gap_samples() -> usize {
    41
}
fn default_gap_levels() -> usize {
    4
}
fn default_true() -> bool {
    true
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            basis: Basis::Y,
            shots: 0,
            prep_error: 0.0,
            seed: None,
            edge_threshold: default_edge_threshold(),
            gap_samples: default_gap_samples(),
            gap_levels: default_gap_levels(),
            reverse: true,
        }
    }
}

impl AnalysisConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prep_error) {
            return Err(Error::validation("analysis.prep_error", "must lie in [0, 1]"));
        }
        if !(self.edge_threshold > 0.0 && self.edge_threshold < 1.0) {
            return Err(Error::validation("analysis.edge_threshold", "must lie in (0, 1)"));
        }
        if self.gap_levels < 2 {
            return Err(Error::validation("analysis.gap_levels", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trap: Option<TrapConfig>,
    #[serde(default)]
    pub drive: DriveConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn trap_block(name: &str) -> Result<TrapConfig> {
    let p = trap_preset(name)?;
    Ok(TrapConfig {
        omega_x_khz: p.fx_khz,
        omega_y_khz: p.fy_khz,
        omega_z_khz: p.fz_khz,
        n_ions: p.n_ions,
        mass_amu: YB171_MASS_AMU,
        charge_e: 1.0,
        restarts: DEFAULT_RESTARTS,
    })
}

/// Default phonon drive for trap presets: detuned 20 kHz above the COM mode.
fn phonon_drive_block(fz_khz: f64) -> DriveConfig {
    DriveConfig {
        rabi_khz: Some(Rabi::Uniform(200.0)),
        mu_mhz: Some((fz_khz + 20.0) * 1e-3),
        ..DriveConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub kind: &'static str,
    pub n_ions: usize,
    pub description: &'static str,
}

pub fn list_presets() -> Vec<PresetInfo> {
    let diagrams = DIAGRAM_PRESETS.iter().map(|p| PresetInfo {
        name: p.name,
        kind: "diagram",
        n_ions: p.n_ions,
        description: p.description,
    });
    let traps = TRAP_PRESETS.iter().map(|p| PresetInfo {
        name: p.name,
        kind: "trap",
        n_ions: p.n_ions,
        description: p.description,
    });
    diagrams.chain(traps).collect()
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| {
            let path = e.message().split('`').nth(1).unwrap_or("config").to_string();
            Error::validation(path, e.to_string().trim().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        ExperimentConfig {
            preset: Some(name.to_string()),
            seed: 0,
            trap: None,
            drive: DriveConfig::default(),
            schedule: ScheduleConfig::default(),
            analysis: AnalysisConfig::default(),
        }
        .resolved()
    }

    /// Applies the preset, if any: diagram presets replace the trap and drive
    /// blocks, trap presets replace the trap block and supply a phonon drive
    /// when none is configured.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if let Some(name) = &self.preset {
            if let Ok(d) = diagram_preset(name) {
                out.trap = Some(trap_block(d.trap_preset)?);
                out.drive = DriveConfig {
                    source: CouplingSource::Diagram,
                    diagram: Some(d.name.to_string()),
                    ..DriveConfig::default()
                };
            } else if let Ok(t) = trap_preset(name) {
                out.trap = Some(trap_block(t.name)?);
                if self.drive.source == CouplingSource::Phonon && self.drive.mu_mhz.is_none() {
                    let sign_flip = self.drive.sign_flip;
                    out.drive = DriveConfig {
                        sign_flip,
                        ..phonon_drive_block(t.fz_khz)
                    };
                }
            } else {
                return Err(Error::validation("preset", format!("unknown preset `{name}`")));
            }
        }
        Ok(out)
    }

    /// Validates the resolved configuration; errors carry the offending key path.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.resolved()?;
        if let Some(t) = &cfg.trap {
            t.validate()?;
        }
        cfg.drive.validate(cfg.trap.as_ref())?;
        if let (Some(t), CouplingSource::Diagram) = (&cfg.trap, cfg.drive.source) {
            let d = diagram_preset(cfg.drive.diagram.as_deref().unwrap_or_default())?;
            if d.n_ions != t.n_ions {
                return Err(Error::validation(
                    "trap.n_ions",
                    format!("diagram `{}` has {} ions", d.name, d.n_ions),
                ));
            }
        }
        cfg.schedule.validate()?;
        cfg.analysis.validate()
    }

    pub fn n_spins(&self) -> Result<usize> {
        let cfg = self.resolved()?;
        match cfg.drive.source {
            CouplingSource::Diagram => Ok(diagram_preset(cfg.drive.diagram.as_deref().unwrap_or_default())?.n_ions),
            CouplingSource::Explicit => Ok(cfg.drive.explicit_couplings()?.n_ions),
            CouplingSource::Phonon => cfg
                .trap
                .as_ref()
                .map(|t| t.n_ions)
                .ok_or_else(|| Error::validation("trap", "missing")),
        }
    }

    pub fn analysis_seed(&self) -> u64 {
        self.analysis.seed.unwrap_or(self.seed)
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> Result<String> {
        Ok(content_hash(&self.resolved()?))
    }
}

pub fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}
