use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state is not normalized (norm deviates from 1 by {0:e})")]
    NotNormalized(f64),

    #[error("mode index {index} out of range for {n_modes} modes")]
    ModeOutOfRange { index: usize, n_modes: usize },

    #[error("unsupported number of sites: {0} (expected 4 or 6)")]
    UnsupportedSites(usize),

    #[error("operator is not Hermitian (max imaginary coefficient {0:e})")]
    NonHermitian(f64),

    #[error("operators do not commute: {0}")]
    NonCommuting(String),

    #[error("no admissible designated qubit for symmetry {0}")]
    NoAdmissibleQubit(String),

    #[error("symmetry {0} is not a Z/I tensor product")]
    NotDiagonal(String),

    #[error("state is not a simultaneous symmetry eigenstate, measured expectations {0:?}")]
    NotEigenstate(Vec<(String, f64)>),

    #[error("register of {0} qubits is too large for dense diagonalization")]
    TooLarge(usize),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("operator power has {0} terms, above the explosion guard")]
    TermExplosion(usize),

    #[error("symmetry post-selection retained no shots (retained fraction {0})")]
    EmptyPostselection(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("record was produced by version {record}, this binary is {binary}")]
    VersionMismatch { record: String, binary: String },

    #[error("record `{0}` not found")]
    RecordNotFound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
