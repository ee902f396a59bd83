use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ionmag::config::{list_presets, ExperimentConfig};
use ionmag::ising::{config_bits, GroundManifold};
use ionmag::measure::Basis;
use ionmag::pipeline::{self, GroundRecord, Pipeline};
use ionmag::state::SpinState;
use ionmag::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "ionmag", version, about = "Frustrated transverse-field Ising magnets in planar ion crystals")]
struct Cli {
    /// Experiment definition (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in preset, used when no config file is given.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Directory for output files and the stage cache.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Equilibrium positions of the planar crystal.
    Crystal,
    /// Transverse normal modes.
    Modes,
    /// Ising coupling matrix and interaction diagram.
    Couplings,
    /// Classical ground manifold.
    Ground,
    /// Lowest coupled gap along the ramp.
    Gaps,
    /// Ramped evolution from the transverse-field ground state.
    Evolve,
    /// Forward ramp followed by the mirrored ramp back.
    Reverse,
    /// Readout of a saved state.
    Analyze {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        manifold: PathBuf,
        #[arg(long)]
        basis: Option<String>,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        prep_error: Option<f64>,
    },
    /// Full pipeline with CSV exports.
    Run,
    /// List built-in presets.
    Presets,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_validation() => 2,
        Error::Io(_) | Error::Json(_) => 2,
        _ => 3,
    }
}

fn load_config(cli: &Cli) -> ionmag::Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => {
            let mut cfg = ExperimentConfig::load(path)?;
            if cli.preset.is_some() {
                cfg.preset.clone_from(&cli.preset);
            }
            cfg
        }
        (None, Some(name)) => ExperimentConfig::from_preset(name)?,
        (None, None) => return Err(Error::validation("config", "pass --config FILE or --preset NAME")),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Prints `body` and, with `--out-dir`, also writes it to `name`.
fn emit(cli: &Cli, name: &str, body: &str) -> ionmag::Result<()> {
    if let Some(dir) = &cli.out_dir {
        pipeline::write_file(dir, name, body)?;
    }
    print!("{body}");
    Ok(())
}

fn emit_value<T: serde::Serialize>(cli: &Cli, stem: &str, value: &T, csv: impl FnOnce() -> String) -> ionmag::Result<()> {
    match cli.format {
        Format::Json => emit(cli, &format!("{stem}.json"), &pipeline::to_json(value)?),
        Format::Csv => emit(cli, &format!("{stem}.csv"), &csv()),
    }
}

fn load_manifold(path: &Path) -> ionmag::Result<GroundManifold> {
    let value: serde_json::Value = pipeline::load_json(path)?;
    let inner = value
        .pointer("/ground/manifold")
        .or_else(|| value.get("manifold"))
        .cloned()
        .unwrap_or(value);
    Ok(serde_json::from_value(inner)?)
}

fn load_state(path: &Path) -> ionmag::Result<SpinState> {
    let value: serde_json::Value = pipeline::load_json(path)?;
    let inner = value
        .pointer("/evolution/final_state")
        .or_else(|| value.get("final_state"))
        .cloned()
        .unwrap_or(value);
    let state: SpinState = serde_json::from_value(inner)?;
    SpinState::new(state.n_spins, state.amplitudes)
}

fn run(cli: &Cli) -> ionmag::Result<()> {
    if let Command::Presets = cli.command {
        let presets = list_presets();
        return match cli.format {
            Format::Json => emit(cli, "presets.json", &pipeline::to_json(&presets)?),
            Format::Csv => {
                let mut s = String::from("name,kind,n_ions,description\n");
                for p in presets {
                    let _ = writeln!(s, "{},{},{},\"{}\"", p.name, p.kind, p.n_ions, p.description);
                }
                emit(cli, "presets.csv", &s)
            }
        };
    }

    if let Command::Analyze {
        state,
        manifold,
        basis,
        shots,
        prep_error,
    } = &cli.command
    {
        let cfg = match (&cli.config, &cli.preset) {
            (None, None) => None,
            _ => Some(load_config(cli)?),
        };
        let a = cfg.as_ref().map(|c| c.analysis.clone()).unwrap_or_default();
        let basis: Basis = match basis {
            Some(b) => b.parse()?,
            None => a.basis,
        };
        let seed = cli.seed.or(a.seed).or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
        let state = load_state(state)?;
        let manifold = load_manifold(manifold)?;
        let record = pipeline::analyze(
            &state,
            &manifold,
            basis,
            shots.unwrap_or(a.shots),
            prep_error.unwrap_or(a.prep_error),
            seed,
        )?;
        let hash = ionmag::config::content_hash(&(&state, &manifold, basis.as_str()));
        if let Some(dir) = &cli.out_dir {
            pipeline::write_file(dir, "histogram.csv", &pipeline::histogram_csv(&hash, &record.histogram))?;
            let mut sx = pipeline::provenance_line(&hash);
            sx.push_str("sx,probability\n");
            for (v, p) in record.sx.values.iter().zip(&record.sx.probs) {
                let _ = writeln!(sx, "{v},{p:.12e}");
            }
            pipeline::write_file(dir, "sx.csv", &sx)?;
        }
        let summary = json!({
            "version": ionmag::VERSION,
            "input_hash": hash,
            "basis": basis.as_str(),
            "ground_fraction": record.ground_fraction,
            "mean_sx": record.mean_sx,
            "shots": record.shots,
        });
        return emit_value(cli, "summary", &summary, || {
            format!(
                "ground_fraction,mean_sx\n{},{:.12e}\n",
                record.ground_fraction.map(|g| format!("{g:.12e}")).unwrap_or_default(),
                record.mean_sx
            )
        });
    }

    let cfg = load_config(cli)?;
    let hash = cfg.hash()?;
    let p = Pipeline::new(&cfg, cli.out_dir.as_deref())?;
    match &cli.command {
        Command::Crystal => {
            let c = p
                .crystal()?
                .ok_or_else(|| Error::validation("trap", "this config has no trap block"))?;
            emit_value(cli, "crystal", &c, || pipeline::crystal_csv(&hash, &c))
        }
        Command::Modes => {
            let m = p
                .modes()?
                .ok_or_else(|| Error::validation("trap", "this config has no trap block"))?;
            emit_value(cli, "modes", &m, || pipeline::modes_csv(&hash, &m))
        }
        Command::Couplings => {
            let c = p.couplings()?;
            emit_value(cli, "couplings", &c, || pipeline::couplings_csv(&hash, &c))
        }
        Command::Ground => {
            let g = p.ground()?;
            emit_value(cli, "ground", &g, || ground_csv(&hash, &g))
        }
        Command::Gaps => {
            let g = p.gaps()?.ok_or_else(|| Error::TooManySpins {
                n: cfg.n_spins().unwrap_or(0),
                max: ionmag::ising::MAX_GAP_SPINS,
                what: "gap profile",
            })?;
            emit_value(cli, "gaps", &g, || pipeline::gaps_csv(&hash, &g))
        }
        Command::Evolve => {
            let ev = p.evolve()?;
            if let Some(dir) = &cli.out_dir {
                pipeline::write_file(dir, "final_state.json", &pipeline::to_json(&ev.final_state)?)?;
            }
            let n = ev.final_state.n_spins;
            emit_value(cli, "evolution", &ev, || pipeline::trajectory_csv(&hash, &ev, n))
        }
        Command::Reverse => {
            let r = p.reverse()?;
            emit_value(cli, "reverse", &r, || {
                let mut s = pipeline::provenance_line(&hash);
                s.push_str("sx,initial,post_forward,post_return\n");
                for (k, v) in r.sx_initial.values.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{v},{:.12e},{:.12e},{:.12e}",
                        r.sx_initial.probs[k], r.sx_forward.probs[k], r.sx_returned.probs[k]
                    );
                }
                s
            })
        }
        Command::Run => {
            let record = p.run()?;
            let files = match &cli.out_dir {
                Some(dir) => pipeline::write_run(&record, dir)?,
                None => Vec::new(),
            };
            let summary = json!({
                "version": record.version,
                "config_hash": record.config_hash,
                "n_spins": record.couplings.j.n_ions,
                "degeneracy": record.ground.manifold.degeneracy,
                "ground_configs": record.ground.labels,
                "ground_fraction": record.analysis.ground_fraction,
                "mean_sx": record.analysis.mean_sx,
                "return_probability": record.reversal.as_ref().map(|r| r.return_probability),
                "files": files.iter().filter_map(|f| f.file_name()).map(|f| f.to_string_lossy().into_owned()).collect::<Vec<_>>(),
            });
            match cli.format {
                Format::Json => print!("{}", pipeline::to_json(&summary)?),
                Format::Csv => print!("{}", pipeline::evolution_csv(&record)),
            }
            Ok(())
        }
        Command::Presets | Command::Analyze { .. } => unreachable!("handled above"),
    }
}

fn ground_csv(hash: &str, g: &GroundRecord) -> String {
    let mut s = pipeline::provenance_line(hash);
    s.push_str("index,bits,label,energy_khz\n");
    for (c, label) in g.manifold.configs.iter().zip(&g.labels) {
        let _ = writeln!(s, "{c},{},{label},{:.12e}", config_bits(*c, g.manifold.n_spins), g.energy_khz);
    }
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
