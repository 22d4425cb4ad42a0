use thiserror::Error;

/// Errors raised by every module of the library.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("mesh structure: {0}")]
    Structure(String),
    #[error("family is not transversal: {0}")]
    Transversality(String),
    #[error("metric: {0}")]
    Metric(String),
    #[error("assembly: {0}")]
    Assembly(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("domain: {0}")]
    Domain(String),
    #[error("ill-conditioned: {0}")]
    Conditioning(String),
    #[error("step size: {0}")]
    StepSize(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("iteration stagnated: {0}")]
    Stagnation(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("conformal perturbation rejected (measured DN difference {norm:e})")]
    Conformal { norm: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(LabError::Dimension { expected, got })
    }
}
