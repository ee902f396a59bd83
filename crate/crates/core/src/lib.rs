//! Simulation of frustrated transverse-field Ising magnets in planar trapped-ion
//! crystals: equilibrium geometry, transverse phonon modes, phonon-mediated
//! couplings, exact diagnostics, ramped evolution and readout.

pub mod adiabatic;
pub mod config;
pub mod coupling;
pub mod error;
pub mod ising;
pub mod measure;
pub mod modes;
mod optim;
pub mod par;
pub mod pipeline;
pub mod state;
pub mod trap;
pub mod units;

pub use adiabatic::{evolve, ground_population, time_reversal_protocol, RampSchedule, StepControl, Trajectory};
pub use config::ExperimentConfig;
pub use coupling::{classify_graph, coupling_matrix, CouplingMatrix, InteractionDiagram, RamanDrive};
pub use error::{Error, Result};
pub use ising::{classical_ground_manifold, dense_hamiltonian, gap_profile, GapProfile, GroundManifold};
pub use measure::{basis_populations, ground_state_fraction, sample_shots, sx_distribution, Basis, PopulationHistogram, SxDistribution};
pub use modes::{transverse_modes, ModeSpectrum};
pub use pipeline::{emit_plot_data, run_pipeline, RunRecord};
pub use state::{initial_state, SpinState};
pub use trap::{equilibrium_positions, IonCrystal, TrapParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
