use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    #[error("non-finite values produced by node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    #[error("non-finite gradient at node {node} ({op})")]
    NonFiniteGrad { node: usize, op: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("estimated step memory {needed} bytes exceeds limit {limit} bytes")]
    Memory { needed: usize, limit: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-parsable category string, used by the CLI exit path.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } | Error::NonFiniteGrad { .. } => "numeric",
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::Format(_) => "format",
            Error::Memory { .. } => "memory",
            Error::Checkpoint(_) => "checkpoint",
            Error::Pipeline(_) => "pipeline",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
