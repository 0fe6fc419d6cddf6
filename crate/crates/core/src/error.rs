use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by grid construction, loss evaluation, metrics and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty domain: {0}")]
    EmptyDomain(&'static str),

    #[error("non-positive depth {value} at valid pixel ({x}, {y})")]
    NonPositiveDepth { x: usize, y: usize, value: f64 },

    #[error("zero-length normal at valid pixel ({x}, {y})")]
    ZeroNormal { x: usize, y: usize },

    #[error("invalid value {value} at valid pixel ({x}, {y}): {reason}")]
    InvalidValue {
        x: usize,
        y: usize,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate depth range: all valid pixels equal {0}")]
    DegenerateRange(f64),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("rectangle ({x0}, {y0})-({x1}, {y1}) outside {width}x{height} grid")]
    OutOfBounds {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
