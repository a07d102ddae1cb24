use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = OledError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OledError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("tape does not match stack: {0}")]
    Tape(String),

    #[error("malformed {format} input{}: {message}", path_suffix(.path))]
    Parse {
        format: &'static str,
        path: Option<PathBuf>,
        message: String,
    },

    #[error("checkpoint checksum mismatch")]
    Checksum,

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn path_suffix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" in {}", p.display()),
        None => String::new(),
    }
}

impl OledError {
    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        OledError::Shape {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub(crate) fn parse(format: &'static str, message: impl Into<String>) -> Self {
        OledError::Parse {
            format,
            path: None,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OledError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a file path to parse errors produced by in-memory decoders.
    pub(crate) fn at_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            OledError::Parse {
                format, message, ..
            } => OledError::Parse {
                format,
                path: Some(p.into()),
                message,
            },
            other => other,
        }
    }
}
