//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any module of this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A matrix or index set does not have the shape an operation requires.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Input data violates a structural requirement (asymmetry, bad entries, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numeric argument lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A constraint system has no solution for the given inputs.
    #[error("constraint error: {0}")]
    Constraint(String),

    /// An input file does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Hyperparameter search could not produce a result.
    #[error("search error: {0}")]
    Search(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    /// Filesystem failure, annotated with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A text input failed to parse, annotated with path and line number.
    #[error("parse error at {path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code the CLI maps this error to: 2 for bad input (config, domain,
    /// schema, missing files), 1 for internal/runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Domain(_)
            | Error::Schema(_)
            | Error::Io { .. }
            | Error::Parse { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
