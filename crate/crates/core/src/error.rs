use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Spec,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("missing value at row {row} in column '{column}'")]
    Missing { row: usize, column: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("constraint specification error: {0}")]
    Spec(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Missing { .. }
            | Error::Domain(_)
            | Error::Config(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorCategory::Input,
            Error::Spec(_) => ErrorCategory::Spec,
            Error::Infeasible(_) | Error::Numeric(_) | Error::Contract(_) => ErrorCategory::Numeric,
        }
    }

    /// Process exit code: 2 input, 3 spec, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            ErrorCategory::Input => 2,
            ErrorCategory::Spec => 3,
            ErrorCategory::Numeric => 4,
        }
    }
}
