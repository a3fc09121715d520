use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("operator has no spectral decomposition; {0} needs one")]
    NotSpectral(&'static str),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("measure has an atom at zero; negative powers are undefined")]
    AtomAtZero,

    #[error("inconsistent problem: residual {residual:e} exceeds {threshold:e}")]
    Inconsistent { residual: f64, threshold: f64 },

    #[error("{needed} records required, got {got}")]
    InsufficientRecords { needed: usize, got: usize },

    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("unknown test case `{0}`")]
    UnknownTestCase(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
