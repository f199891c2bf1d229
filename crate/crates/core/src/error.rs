use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header key `{key}`: {reason}")]
    Parse { key: String, reason: String },

    #[error("data size mismatch: expected {expected} bytes, found {actual}")]
    Size { expected: usize, actual: usize },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("point ({:.3}, {:.3}, {:.3}) mm lies outside the volume", .0[0], .0[1], .0[2])]
    OutOfBounds([f64; 3]),

    #[error("neighbourhood around ({:.3}, {:.3}, {:.3}) mm contains no voxel centres", .0[0], .0[1], .0[2])]
    DegenerateRegion([f64; 3]),

    #[error("invalid phantom specification: {0}")]
    Spec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conflicting constraints: {0}")]
    ConstraintConflict(String),

    #[error("border seed out of range: {0}")]
    ConstraintOutOfRange(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("undefined Dice coefficient: both masks are empty")]
    UndefinedDice,

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised while reading or writing files (including
    /// malformed file contents), as opposed to algorithmic failures.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Size { .. }
                | Error::UnsupportedFormat(_)
                | Error::Json(_)
        )
    }
}
