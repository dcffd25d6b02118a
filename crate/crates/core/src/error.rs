use std::io;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped by the exit-code class the command line maps them
/// to: configuration problems, numerical failures, and I/O.
#[derive(Debug, Error)]
pub enum PsmError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("scaling range for `{field}` is degenerate (min = max = {value})")]
    DegenerateRange { field: String, value: f64 },

    #[error("CFL violation: Courant number {courant:.3} > 1 at face {face} (substep {substep} s)")]
    Cfl {
        courant: f64,
        face: usize,
        substep: f64,
    },

    #[error("nonlinear iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("steady state not reached after {time} s (max relative change {residual:.3e})")]
    SteadyState { time: f64, residual: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("loss became NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("twin fine-tuning diverged: loss grew from {initial:.3e} to {current:.3e}")]
    Divergence { initial: f64, current: f64 },

    #[error("linearized state matrix is not Schur (spectral radius {0:.4})")]
    NotSchur(f64),

    #[error("matrix (I - A) is singular")]
    SingularSteadyState,

    #[error("bad file format: {0}")]
    Format(String),

    #[error("control step {step}: {source}")]
    AtStep { step: usize, source: Box<PsmError> },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl PsmError {
    /// Exit code class used by the command line: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            PsmError::Config(_) | PsmError::Dimension { .. } | PsmError::DegenerateRange { .. } => 2,
            PsmError::Io(_) | PsmError::Format(_) => 4,
            PsmError::AtStep { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

impl From<csv::Error> for PsmError {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(e) => PsmError::Io(e),
            other => PsmError::Format(format!("{other:?}")),
        }
    }
}

impl From<toml::de::Error> for PsmError {
    fn from(err: toml::de::Error) -> Self {
        PsmError::Config(err.to_string())
    }
}

impl From<serde_json::Error> for PsmError {
    fn from(err: serde_json::Error) -> Self {
        PsmError::Format(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PsmError>;
