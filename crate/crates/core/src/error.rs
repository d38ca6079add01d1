//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// The drift matrix has an eigenvalue with real part above the Hurwitz margin.
    #[error("stability error: max real eigenvalue part {max_re:.3e} is not below -{margin:.1e}")]
    Stability { max_re: f64, margin: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("no admissible H-infinity solution at attenuation level {gamma}: {reason}")]
    InfeasibleGamma { gamma: f64, reason: String },

    #[error("coupling error: {0}")]
    Coupling(String),

    #[error("synthesis rejected: {0}")]
    SynthesisRejected(String),

    #[error("steady state is not unique: {0}")]
    DegenerateSteadyState(String),

    #[error("unsupported term: {0}")]
    UnsupportedTerm(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("memory guard: {0}")]
    MemoryGuard(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Reads an input file, reporting failures as configuration errors.
pub fn read_input(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })
}
