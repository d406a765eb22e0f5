//! Error type shared by every module, with process exit-code mapping for the CLI.

use std::io;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape mismatch in a matrix or vector operation.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A value outside the mathematical domain of an operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A malformed input file, with the offending line.
    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    /// Inconsistent or invalid data (bad offsets, unknown ids, schema mismatch).
    #[error("data error: {0}")]
    Data(String),

    /// Training produced a non-finite loss or parameter.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    /// EDAG expansion exceeded the branch cap or hit an unrecoverable state.
    #[error("decode error in document {doc_id}: {detail}")]
    Decode { doc_id: String, detail: String },

    /// Invalid configuration value or missing referenced file.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dimension(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub fn data(detail: impl Into<String>) -> Self {
        Error::Data(detail.into())
    }

    pub fn parse(path: impl Into<String>, line: usize, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            detail: detail.into(),
        }
    }

    pub fn training(epoch: usize, detail: impl Into<String>) -> Self {
        Error::Training { epoch, detail: detail.into() }
    }

    pub fn decode(doc_id: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Decode {
            doc_id: doc_id.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI exit code: 2 for data problems, 3 for numeric/training problems.
    /// Usage errors (exit 1) are produced by argument parsing, not this type.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension { .. }
            | Error::Domain { .. }
            | Error::Training { .. } => 3,
            Error::Parse { .. }
            | Error::Data(_)
            | Error::Decode { .. }
            | Error::Config(_)
            | Error::Io { .. }
            | Error::Json(_) => 2,
        }
    }
}
