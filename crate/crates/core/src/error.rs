use std::path::PathBuf;

/// Errors produced anywhere in the planning stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("query point ({x:.4}, {y:.4}) lies outside the field bounds")]
    OutOfBounds { x: f64, y: f64 },

    #[error("body sample {index} at ({x:.4}, {y:.4}) falls outside the environment field; enlarge the field")]
    SampleOutOfBounds { index: usize, x: f64, y: f64 },

    #[error("index {index} out of range (valid: {valid})")]
    IndexOutOfRange { index: usize, valid: String },

    #[error("no path found: {0}")]
    NoPath(String),

    #[error("objective returned a non-finite value at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
