//! Stage orchestration: crystal → modes → couplings → ground → gaps → evolve
//! → reverse → analyze, with content-addressed caching and CSV
//! exports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{
    evolve, ground_population, sx_expectation, time_reversal_protocol, uniform_samples, RampSchedule, StepControl,
};
use crate::config::{content_hash, CouplingSource, ExperimentConfig};
use crate::coupling::{apply_sign_flip, classify_graph, coupling_matrix, diagram_preset, CouplingMatrix, InteractionDiagram};
use crate::error::{Error, Result};
use crate::ising::{classical_ground_manifold, gap_profile, GapProfile, GroundManifold, MAX_GAP_SPINS};
use crate::measure::{
    basis_populations, ground_state_fraction, sample_shots, sx_distribution, Basis, PopulationHistogram, SxDistribution,
};
use crate::modes::{mode_comb, transverse_modes, ModeSpectrum};
use crate::state::{initial_state, SpinState};
use crate::trap::{equilibrium_positions, verify_stability, IonCrystal, StabilityReport};
use crate::units::{khz, to_khz};
use crate::VERSION;

const TOP_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalRecord {
    pub crystal: IonCrystal,
    pub positions_um: Vec<[f64; 2]>,
    pub length_scale_um: f64,
    pub stability: StabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRecord {
    pub source: CouplingSource,
    pub j: CouplingMatrix,
    /// J/2π, kHz.
    pub j_khz: Vec<Vec<f64>>,
    pub diagram: InteractionDiagram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundRecord {
    pub manifold: GroundManifold,
    pub labels: Vec<String>,
    /// E/2π, kHz.
    pub energy_khz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSample {
    pub t_us: f64,
    pub b_khz: f64,
    pub ground_fraction: f64,
    pub sx_mean: f64,
    /// (index, probability) of the most populated y-basis configurations.
    pub top: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRecord {
    pub schedule: RampSchedule,
    /// Accepted integration step, µs.
    pub step_us: f64,
    pub samples: Vec<EvolutionSample>,
    pub final_state: SpinState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalRecord {
    pub return_probability: f64,
    pub sx_initial: SxDistribution,
    pub sx_forward: SxDistribution,
    pub sx_returned: SxDistribution,
    pub returned_state: SpinState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub histogram: PopulationHistogram,
    pub sx: SxDistribution,
    /// Only for y-basis histograms.
    pub ground_fraction: Option<f64>,
    pub mean_sx: f64,
    pub shots: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub crystal: Option<CrystalRecord>,
    pub modes: Option<ModeSpectrum>,
    pub couplings: CouplingRecord,
    pub ground: GroundRecord,
    pub gaps: Option<GapProfile>,
    pub evolution: EvolutionRecord,
    pub reversal: Option<ReversalRecord>,
    pub analysis: AnalysisRecord,
}

/// Stage runner for one resolved configuration.
pub struct Pipeline {
    cfg: ExperimentConfig,
    cache_dir: Option<PathBuf>,
}

impl Pipeline {
    /// Validates `cfg`; stage outputs are cached under `out_dir/cache` when given.
    pub fn new(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            cfg: cfg.resolved()?,
            cache_dir: out_dir.map(|d| d.join("cache")),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn cached<T, K, F>(&self, stage: &'static str, key: &K, compute: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        K: Serialize,
        F: FnOnce() -> Result<T>,
    {
        let Some(dir) = &self.cache_dir else {
            return compute().map_err(|e| e.in_stage(stage));
        };
        let hash = content_hash(&(stage, VERSION, key));
        let path = dir.join(format!("{stage}-{}.json", &hash[..16]));
        if let Ok(bytes) = fs::read(&path) {
            if let Ok(v) = serde_json::from_slice(&bytes) {
                return Ok(v);
            }
        }
        let value = compute().map_err(|e| e.in_stage(stage))?;
        fs::create_dir_all(dir)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(&value)?)?;
        fs::rename(&tmp, &path)?;
        Ok(value)
    }

    fn trap_key(&self) -> impl Serialize + '_ {
        (&self.cfg.trap, self.cfg.seed)
    }

    fn coupling_key(&self) -> impl Serialize + '_ {
        (&self.cfg.trap, self.cfg.seed, &self.cfg.drive, self.cfg.analysis.edge_threshold)
    }

    pub fn crystal(&self) -> Result<Option<CrystalRecord>> {
        let Some(t) = &self.cfg.trap else {
            return Ok(None);
        };
        self.cached("crystal", &self.trap_key(), || {
            let trap = t.params()?;
            let crystal = equilibrium_positions(&trap, t.n_ions, t.restarts, self.cfg.seed)?;
            Ok(Some(CrystalRecord {
                positions_um: crystal.positions_um(&trap),
                length_scale_um: trap.length_scale() * 1e6,
                stability: verify_stability(&crystal, &trap),
                crystal,
            }))
        })
    }

    pub fn modes(&self) -> Result<Option<ModeSpectrum>> {
        let Some(t) = &self.cfg.trap else {
            return Ok(None);
        };
        let crystal = self.crystal()?;
        self.cached("modes", &self.trap_key(), || {
            let c = crystal.expect("trap block implies a crystal");
            transverse_modes(&c.crystal, &t.params()?).map(Some)
        })
    }

    pub fn couplings(&self) -> Result<CouplingRecord> {
        let drive = &self.cfg.drive;
        let modes = match drive.source {
            CouplingSource::Phonon => self.modes()?,
            _ => None,
        };
        self.cached("couplings", &self.coupling_key(), || {
            let mut j = match drive.source {
                CouplingSource::Phonon => {
                    let t = self.cfg.trap.as_ref().expect("validated");
                    let spectrum = modes.expect("phonon source has modes");
                    coupling_matrix(&spectrum, &drive.raman(t.n_ions, &t.params()?)?)?
                }
                CouplingSource::Diagram => {
                    diagram_preset(drive.diagram.as_deref().unwrap_or_default())?.couplings_with_scale(khz(drive.j0_khz))
                }
                CouplingSource::Explicit => drive.explicit_couplings()?,
            };
            if drive.sign_flip {
                j = apply_sign_flip(&j);
            }
            let diagram = classify_graph(&j, self.cfg.analysis.edge_threshold)?;
            Ok(CouplingRecord {
                source: drive.source,
                j_khz: j.j.iter().map(|r| r.iter().map(|&v| to_khz(v)).collect()).collect(),
                j,
                diagram,
            })
        })
    }

    pub fn ground(&self) -> Result<GroundRecord> {
        let c = self.couplings()?;
        self.cached("ground", &self.coupling_key(), || {
            let manifold = classical_ground_manifold(&c.j)?;
            Ok(GroundRecord {
                labels: manifold.labels(),
                energy_khz: to_khz(manifold.energy),
                manifold,
            })
        })
    }

    pub fn schedule(&self) -> Result<RampSchedule> {
        self.cfg.schedule.schedule()
    }

    fn step_control(&self) -> Result<StepControl> {
        self.cfg.schedule.step_control()
    }

    pub fn gaps(&self) -> Result<Option<GapProfile>> {
        let c = self.couplings()?;
        if c.j.n_ions > MAX_GAP_SPINS {
            return Ok(None);
        }
        let a = &self.cfg.analysis;
        let key = (self.coupling_key(), &self.cfg.schedule, a.gap_samples, a.gap_levels);
        self.cached("gaps", &key, || {
            gap_profile(&c.j, &self.schedule()?, a.gap_samples, a.gap_levels).map(Some)
        })
    }

    pub fn evolve(&self) -> Result<EvolutionRecord> {
        let c = self.couplings()?;
        let g = self.ground()?;
        self.cached("evolve", &(self.coupling_key(), &self.cfg.schedule), || {
            let schedule = self.schedule()?;
            let times = uniform_samples(schedule.duration, self.cfg.schedule.samples);
            let traj = evolve(&initial_state(c.j.n_ions)?, &c.j, &schedule, &times, &self.step_control()?)?;
            let samples = traj
                .points
                .iter()
                .map(|p| {
                    Ok(EvolutionSample {
                        t_us: p.t * 1e6,
                        b_khz: to_khz(p.b_field),
                        ground_fraction: ground_population(&p.state, &g.manifold)?,
                        sx_mean: sx_expectation(&p.state),
                        top: basis_populations(&p.state, Basis::Y).top(TOP_K),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EvolutionRecord {
                schedule,
                step_us: traj.step * 1e6,
                samples,
                final_state: traj.final_state().clone(),
            })
        })
    }

    pub fn reverse(&self) -> Result<ReversalRecord> {
        let c = self.couplings()?;
        self.cached("reverse", &(self.coupling_key(), &self.cfg.schedule), || {
            let out = time_reversal_protocol(&c.j, &self.schedule()?, &[], &self.step_control()?)?;
            Ok(ReversalRecord {
                return_probability: out.return_probability,
                sx_initial: sx_distribution(&out.initial),
                sx_forward: sx_distribution(&out.forward_final),
                sx_returned: sx_distribution(&out.returned),
                returned_state: out.returned,
            })
        })
    }

    pub fn analyze(&self, state: &SpinState, manifold: &GroundManifold) -> Result<AnalysisRecord> {
        analyze(
            state,
            manifold,
            self.cfg.analysis.basis,
            self.cfg.analysis.shots,
            self.cfg.analysis.prep_error,
            self.cfg.analysis_seed(),
        )
        .map_err(|e| e.in_stage("analyze"))
    }

    pub fn run(&self) -> Result<RunRecord> {
        let crystal = self.crystal()?;
        let modes = self.modes()?;
        let couplings = self.couplings()?;
        let ground = self.ground()?;
        let gaps = self.gaps()?;
        let evolution = self.evolve()?;
        let reversal = if self.cfg.analysis.reverse {
            Some(self.reverse()?)
        } else {
            None
        };
        let analysis = self.analyze(&evolution.final_state, &ground.manifold)?;
        Ok(RunRecord {
            version: VERSION.to_string(),
            config_hash: content_hash(&self.cfg),
            config: self.cfg.clone(),
            crystal,
            modes,
            couplings,
            ground,
            gaps,
            evolution,
            reversal,
            analysis,
        })
    }
}

/// Readout of a state: histogram in `basis`, S_x distribution, ground fraction
/// (y basis only) and optional finite-shot counts.
pub fn analyze(
    state: &SpinState,
    manifold: &GroundManifold,
    basis: Basis,
    shots: usize,
    prep_error: f64,
    seed: u64,
) -> Result<AnalysisRecord> {
    if manifold.n_spins != state.n_spins {
        return Err(Error::DimensionMismatch {
            expected: state.n_spins,
            got: manifold.n_spins,
        });
    }
    let histogram = basis_populations(state, basis);
    let ground_fraction = match basis {
        Basis::Y => Some(ground_state_fraction(&histogram, manifold)?),
        _ => None,
    };
    let sx = sx_distribution(state);
    let shots = match shots {
        0 => None,
        n => Some(sample_shots(&histogram, n, prep_error, seed)?),
    };
    Ok(AnalysisRecord {
        mean_sx: sx.mean(),
        histogram,
        sx,
        ground_fraction,
        shots,
    })
}

pub fn run_pipeline(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunRecord> {
    Pipeline::new(cfg, out_dir)?.run()
}

/// First line of every CSV export.
pub fn provenance_line(config_hash: &str) -> String {
    format!("# ionmag {VERSION} config {config_hash}\n")
}

fn f(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn evolution_csv(record: &RunRecord) -> String {
    let mut s = provenance_line(&record.config_hash);
    s.push_str("t_us,B_khz,ground_fraction\n");
    for p in &record.evolution.samples {
        let _ = writeln!(s, "{},{},{}", f(p.t_us), f(p.b_khz), f(p.ground_fraction));
    }
    s
}

/// Trajectory table with S_x and the most populated configurations.
pub fn trajectory_csv(config_hash: &str, ev: &EvolutionRecord, n_spins: usize) -> String {
    let mut s = provenance_line(config_hash);
    s.push_str("t_us,B_khz,ground_fraction,sx_mean");
    for k in 1..=TOP_K {
        let _ = write!(s, ",top{k}_config,top{k}_prob");
    }
    s.push('\n');
    for p in &ev.samples {
        let _ = write!(s, "{},{},{},{}", f(p.t_us), f(p.b_khz), f(p.ground_fraction), f(p.sx_mean));
        for k in 0..TOP_K {
            match p.top.get(k) {
                Some(&(c, prob)) => {
                    let _ = write!(s, ",{},{}", crate::ising::config_bits(c, n_spins), f(prob));
                }
                None => s.push_str(",,"),
            }
        }
        s.push('\n');
    }
    s
}

pub fn histogram_csv(config_hash: &str, hist: &PopulationHistogram) -> String {
    let mut s = provenance_line(config_hash);
    s.push_str("index,bits,label,probability\n");
    for (i, (p, label)) in hist.probs.iter().zip(&hist.labels).enumerate() {
        let _ = writeln!(s, "{i},{},{label},{}", crate::ising::config_bits(i, hist.n_spins), f(*p));
    }
    s
}

pub fn modes_csv(config_hash: &str, spectrum: &ModeSpectrum) -> String {
    let mut s = provenance_line(config_hash);
    s.push_str("mode,frequency_mhz");
    for i in 1..=spectrum.n_ions {
        let _ = write!(s, ",weight_ion{i}");
    }
    s.push('\n');
    for line in mode_comb(spectrum) {
        let _ = write!(s, "{},{}", line.index, f(line.frequency_mhz));
        for w in &line.weights {
            let _ = write!(s, ",{}", f(*w));
        }
        s.push('\n');
    }
    s
}

pub fn sx_csv(record: &RunRecord) -> String {
    let mut s = provenance_line(&record.config_hash);
    s.push_str("sx,initial,post_forward,post_return\n");
    let n = record.couplings.j.n_ions;
    let initial = sx_distribution(&initial_state(n).expect("valid spin count"));
    let (fwd, ret) = match &record.reversal {
        Some(r) => (r.sx_forward.clone(), Some(r.sx_returned.clone())),
        None => (sx_distribution(&record.evolution.final_state), None),
    };
    for (k, v) in initial.values.iter().enumerate() {
        let back = ret.as_ref().map(|r| f(r.probs[k])).unwrap_or_default();
        let _ = writeln!(s, "{v},{},{},{back}", f(initial.probs[k]), f(fwd.probs[k]));
    }
    s
}

pub fn gaps_csv(config_hash: &str, gaps: &GapProfile) -> String {
    let mut s = provenance_line(config_hash);
    s.push_str("t_us,B_khz,gap_khz,coupled,e0_khz\n");
    for g in &gaps.samples {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            f(g.t * 1e6),
            f(to_khz(g.b_field)),
            f(to_khz(g.gap)),
            g.coupled,
            f(to_khz(g.eigenvalues[0]))
        );
    }
    s
}

pub fn couplings_csv(config_hash: &str, c: &CouplingRecord) -> String {
    let mut s = provenance_line(config_hash);
    s.push_str("i,j,j_khz,relative,kind\n");
    for e in &c.diagram.edges {
        let kind = match e.kind {
            crate::coupling::EdgeKind::Fm => "fm",
            crate::coupling::EdgeKind::Afm => "afm",
        };
        let _ = writeln!(s, "{},{},{},{},{kind}", e.a, e.b, f(to_khz(e.value)), f(e.relative));
    }
    s
}

pub fn crystal_csv(config_hash: &str, c: &CrystalRecord) -> String {
    let mut s = provenance_line(config_hash);
    s.push_str("ion,x_um,y_um\n");
    for (i, p) in c.positions_um.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, f(p[0]), f(p[1]));
    }
    s
}

/// Writes `contents` to `dir/name`, creating `dir`.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// CSV exports: evolution, histogram, modes, sx and gaps.
pub fn emit_plot_data(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    let h = &record.config_hash;
    let mut out = vec![
        write_file(dir, "evolution.csv", &evolution_csv(record))?,
        write_file(dir, "histogram.csv", &histogram_csv(h, &record.analysis.histogram))?,
    ];
    if let Some(m) = &record.modes {
        out.push(write_file(dir, "modes.csv", &modes_csv(h, m))?);
    }
    out.push(write_file(dir, "sx.csv", &sx_csv(record))?);
    if let Some(g) = &record.gaps {
        out.push(write_file(dir, "gaps.csv", &gaps_csv(h, g))?);
    }
    Ok(out)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `record.json` and the CSV exports.
pub fn write_run(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = vec![write_file(dir, "record.json", &to_json(record)?)?];
    files.extend(emit_plot_data(record, dir)?);
    Ok(files)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

