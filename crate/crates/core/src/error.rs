use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ions {0} and {1} coincide (separation {2:e})")]
    CoincidentIons(usize, usize, f64),

    #[error("no restart reached gradient norm < {grad_tol:e} within {max_iters} iterations (best {best:e})")]
    NoConvergence {
        grad_tol: f64,
        max_iters: usize,
        best: f64,
    },

    #[error("crystal is not planar-stable: transverse stiffness eigenvalue {0:e} <= 0")]
    UnstableCrystal(f64),

    #[error("detuning is within the resonance guard of mode {mode} ({offset_hz:.1} Hz away)")]
    ResonantDetuning { mode: usize, offset_hz: f64 },

    #[error("{n} spins exceeds the limit of {max} for {what}")]
    TooManySpins { n: usize, max: usize, what: &'static str },

    #[error("step control did not converge: population change {change:e} > tol {tol:e} at step {step:e} s")]
    StepNotConverged { change: f64, tol: f64, step: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("histogram is in the {got} basis, expected {expected}")]
    BasisMismatch { expected: String, got: String },

    #[error("invalid config at `{path}`: {msg}")]
    Validation { path: String, msg: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ (Error::Stage { .. } | Error::Validation { .. }) => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// True for config problems, false for numerical or I/O failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation { .. } | Error::UnknownPreset(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
