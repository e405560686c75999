//! Crate-wide error type.

/// Errors produced anywhere in the pipeline.
///
/// The CLI maps these onto exit codes: usage problems are handled by the
/// argument parser (exit 1), `Parse`/`Data`/`DuplicateSpan`/`HeadExhaustion`
/// are data errors (exit 2) and `Numeric` is a numerical failure (exit 3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input text, reported with a 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Structurally invalid data: bad shapes, inconsistent graphs,
    /// infeasible configurations, missing files.
    #[error("{0}")]
    Data(String),

    /// Non-finite values or diverging optimization.
    #[error("{0}")]
    Numeric(String),

    /// Two mentions with the same (start, end) token indices.
    #[error("duplicate mention span ({start}, {end})")]
    DuplicateSpan { start: usize, end: usize },

    /// Every token of a span is already the head of another mention.
    #[error("head exhaustion for span ({start}, {end})")]
    HeadExhaustion { start: usize, end: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
