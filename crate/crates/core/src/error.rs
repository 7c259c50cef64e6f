use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },

    #[error("invalid time at row {row}: {value} (must be > 0)")]
    InvalidTime { row: usize, value: f64 },

    #[error("invalid status at row {row}: {value} (must be 0 or 1)")]
    InvalidStatus { row: usize, value: f64 },

    #[error("no events: at least one observation must have status = 1")]
    NoEvents,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("collinear predictors: information matrix is singular")]
    Collinear,

    #[error("newton-raphson diverged: log partial likelihood is not finite")]
    Diverged,

    #[error("degenerate cutpoint {0}: one side of the split is empty")]
    DegenerateCutpoint(f64),

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("unsupported version: model schema_version {found}, expected {expected}")]
    UnsupportedVersion { found: u64, expected: u64 },

    #[error("checksum failure: model file contents do not match the stored checksum")]
    Checksum,

    #[error("IPCW weight undefined at horizon {horizon}: censoring survival estimate is 0")]
    IpcwUndefined { horizon: f64 },

    #[error("no usable pairs for concordance")]
    NoUsablePairs,

    #[error("relevance labels contain a single class")]
    SingleClass,

    #[error("forest has no stored p-values (combo strategy `random`)")]
    NoPValues,

    #[error("no out-of-bag predictions available")]
    NoOob,

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("censoring rate bisection failed to bracket target {target}")]
    Bracket { target: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that come from the filesystem rather than from the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
