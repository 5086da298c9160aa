use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for {modes}-mode space")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "truncation dim {dim} too small for |alpha| = {alpha:.3}: \
         coherent leakage {leakage:.3e} exceeds tolerance {tol:.3e}"
    )]
    Truncation {
        dim: usize,
        alpha: f64,
        leakage: f64,
        tol: f64,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid Hamiltonian: {0}")]
    InvalidHamiltonian(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "integrator step underflow at t = {t:.6e} (step {step:.3e}): \
         generator too stiff for the requested tolerance; \
         raise tol or reduce the truncation dimension"
    )]
    Stiffness { t: f64, step: f64 },

    #[error("linear algebra backend failure: {0}")]
    Linalg(String),

    #[error("calibration target {target:.3e} unreachable with gamma <= {ceiling:.3e}")]
    CalibrationUnreachable { target: f64, ceiling: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
