use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid stopping rank r={r}: must satisfy 1 <= r <= {total}")]
    InvalidRank { r: usize, total: usize },

    /// The conditional MLE does not exist when every observed failure comes
    /// from one population.
    #[error("degenerate indicator vector: m_r={m_r} with r={r}; the MLE does not exist")]
    DegenerateIndicator { m_r: usize, r: usize },

    #[error("enumeration refused for r={r} (limit {limit})")]
    EnumerationTooLarge { r: usize, limit: usize },

    #[error("observed information matrix is singular or not positive definite")]
    SingularInformation,

    #[error("insufficient draws: need at least {need}, got {got}")]
    InsufficientDraws { need: usize, got: usize },

    #[error("all importance weights are zero or non-finite")]
    ZeroWeights,

    #[error("EM failure: {0}")]
    EmFailure(String),

    #[error("bootstrap aborted: {failed} failed replicates for {accepted} accepted")]
    BootstrapFailure { failed: usize, accepted: usize },

    #[error("redraw cap exceeded: {0} consecutive failed draws")]
    RedrawCapExceeded(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("validation error at row {row}: {msg}")]
    Validation { row: u64, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::Io(_) | Error::Json(_) => {
                ErrorClass::Data
            }
            Error::InvalidRank { .. } | Error::Config(_) | Error::InvalidParameter(_) => {
                ErrorClass::Usage
            }
            _ => ErrorClass::Numerical,
        }
    }

    /// Stable process exit code: 2 usage, 3 data validation, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}
