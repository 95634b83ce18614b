use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient positive weights: need {needed}, have {available}")]
    InsufficientPositiveWeights { needed: usize, available: usize },
    #[error("degenerate candidates: all lateral endpoints are equal")]
    DegenerateCandidates,
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("all aggregated scores are zero")]
    AllZeroScores,
    #[error("gradient buffer is empty")]
    EmptyBuffer,
    #[error("empty stream")]
    EmptyStream,
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("frame index {current} does not follow {previous}")]
    NonIncreasingFrames { previous: u64, current: u64 },
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InsufficientPositiveWeights { .. } => "insufficient-positive-weights",
            Error::DegenerateCandidates => "degenerate-candidates",
            Error::UnknownCategory(_) => "unknown-category",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::NonFiniteLoss => "non-finite-loss",
            Error::EmptyDataset => "empty-dataset",
            Error::AllZeroScores => "all-zero-scores",
            Error::EmptyBuffer => "empty-buffer",
            Error::EmptyStream => "empty-stream",
            Error::InvalidTrajectory(_) => "invalid-trajectory",
            Error::NonIncreasingFrames { .. } => "non-increasing-frames",
            Error::SchemaVersion { .. } => "schema-version-mismatch",
            Error::Parse { .. } => "parse-error",
            Error::Io(_) => "io-error",
            Error::Json(_) => "json-error",
            Error::Csv(_) => "csv-error",
        }
    }
}
