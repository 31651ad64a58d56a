use thiserror::Error;

use crate::dataio::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A case or reference row does not carry exactly the model's factors.
    #[error("schema mismatch: factor `{factor}` is {problem}")]
    SchemaMismatch { factor: String, problem: SchemaProblem },

    #[error("insufficient reference data: need at least {required} cases, got {available}")]
    InsufficientReference { required: usize, available: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("exhaustive Shapley enumeration supports at most {max} factors, model has {factors}")]
    TooLargeForOracle { factors: usize, max: usize },

    #[error("outcomes are not aligned with the reference cases: {0}")]
    Alignment(String),

    #[error("at most {max} factor changes are allowed at a time, got {requested}")]
    LimitExceeded { max: usize, requested: usize },

    #[error("invalid change: {0}")]
    InvalidChange(String),

    #[error("presentation schema error: {0}")]
    Schema(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation failed with {} error(s)", .0.error_count())]
    Validation(ValidationReport),

    #[error("case `{0}` not found")]
    CaseNotFound(String),

    #[error("{0} is disabled")]
    FeatureDisabled(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaProblem {
    Missing,
    Unexpected,
}

impl std::fmt::Display for SchemaProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchemaProblem::Missing => f.write_str("missing"),
            SchemaProblem::Unexpected => f.write_str("not a model factor"),
        }
    }
}

impl Error {
    pub(crate) fn missing(factor: impl Into<String>) -> Self {
        Error::SchemaMismatch {
            factor: factor.into(),
            problem: SchemaProblem::Missing,
        }
    }

    pub(crate) fn unexpected(factor: impl Into<String>) -> Self {
        Error::SchemaMismatch {
            factor: factor.into(),
            problem: SchemaProblem::Unexpected,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Stable machine-readable token, shared by the HTTP API, the CLI and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::SchemaMismatch { .. } => "SCHEMA_MISMATCH",
            Error::InsufficientReference { .. } => "INSUFFICIENT_REFERENCE",
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::TooLargeForOracle { .. } => "TOO_LARGE_FOR_ORACLE",
            Error::Alignment(_) => "ALIGNMENT",
            Error::LimitExceeded { .. } => "TOO_MANY_CHANGES",
            Error::InvalidChange(_) => "INVALID_CHANGE",
            Error::Schema(_) => "SCHEMA",
            Error::InvalidValue(_) => "INVALID_VALUE",
            Error::Parse { .. } => "PARSE",
            Error::Validation(_) => "VALIDATION_FAILED",
            Error::CaseNotFound(_) => "CASE_NOT_FOUND",
            Error::FeatureDisabled(_) => "FEATURE_DISABLED",
            Error::Io { .. } => "IO",
        }
    }
}
