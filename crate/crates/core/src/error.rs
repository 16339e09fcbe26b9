use thiserror::Error;

/// Errors produced by the symbolic-forest engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A tree references a feature outside `1..=p`, or an operator that is
    /// not part of the active operator set.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    /// A value outside the mathematical domain of a density or distribution.
    #[error("domain error: {0}")]
    Domain(String),

    /// The forest's conjugate update is degenerate (non-finite design,
    /// failed Cholesky, or a nonpositive posterior scale).
    #[error("degenerate forest: {0}")]
    Degenerate(String),

    #[error("move not applicable: {0}")]
    NotApplicable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("diagnostic undefined: {0}")]
    Diagnostic(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
