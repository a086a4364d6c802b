use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsdeError {
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("numerical failure computing Gram entry ({i}, {j}): {source}")]
    GramEntry {
        i: usize,
        j: usize,
        #[source]
        source: Box<CsdeError>,
    },

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, CsdeError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CsdeError {
    CsdeError::InvalidArgument(msg.into())
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(CsdeError::LengthMismatch { expected, got })
    }
}
