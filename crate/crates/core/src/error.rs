use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("number of atoms must be at least 1")]
    ZeroAtoms,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("density matrix trace is {trace}, expected 1")]
    BadTrace { trace: f64 },

    #[error("density matrix has eigenvalue {min_eigenvalue:e} below the positivity tolerance")]
    NotPositive { min_eigenvalue: f64 },

    #[error("non-finite values encountered during {0}")]
    NonFinite(&'static str),

    #[error("trace drifted by {drift:e} within one segment")]
    TraceDrift { drift: f64 },

    #[error("mean spin length {norm:e} is too small for squeezing parameters")]
    DegenerateMeanSpin { norm: f64 },

    #[error("superoperator for N = {n_atoms} exceeds the exact-propagation limit N <= {limit}")]
    TooLarge { n_atoms: usize, limit: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("propagation diverged at segment {segment}: {reason}")]
    Diverged { segment: usize, reason: String },

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
