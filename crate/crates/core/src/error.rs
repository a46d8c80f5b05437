use std::path::PathBuf;

/// Errors raised anywhere in the explanation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid number literal {0:?}")]
    Number(String),
    #[error("dimension mismatch in layer {layer}: {message}")]
    Dimension { layer: usize, message: String },
    #[error("invalid domain for feature {feature}: {message}")]
    Domain { feature: usize, message: String },
    #[error("length mismatch: expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("unknown label {label:?} on row {row}")]
    UnknownLabel { label: String, row: usize },
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("partition error: {0}")]
    Partition(String),
    #[error("interpolation error: {0}")]
    Interpolation(String),
    #[error("formula is satisfiable together with the network encoding")]
    Sat,
    #[error("solver budget exhausted")]
    Timeout,
    #[error("sample is classified as {actual:?}, not {expected:?}")]
    Misclassified { expected: String, actual: String },
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("explanation failed its validity check: {0}")]
    Invalid(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("context mismatch: {0}")]
    Context(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
