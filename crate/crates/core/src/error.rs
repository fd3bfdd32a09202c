use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grabcut::SegMask;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: usize, message: String },

    #[error("unsupported image format: {0}")]
    Format(String),

    /// Segmentation kept no leaf pixels. The mask is returned for diagnosis.
    #[error("segmentation produced an empty foreground mask")]
    EmptyMask(Box<SegMask>),

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Decode { .. } => "decode",
            Error::Format(_) => "format",
            Error::EmptyMask(_) => "empty_mask",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Degenerate(_) => "degenerate",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn parse(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}

/// Serializable form of an [`Error`], shared by every JSON front end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}
