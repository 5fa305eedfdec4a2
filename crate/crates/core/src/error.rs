use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image: {0}")]
    MalformedImage(String),

    #[error("unsupported bit depth: maxval {0} exceeds 8 bits per channel")]
    UnsupportedBitDepth(u32),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("manifest: missing header (expected `dist_path,ref_path,score,std`)")]
    MissingHeader,

    #[error("manifest line {line}: non-numeric score `{value}`")]
    NonNumericScore { line: u64, value: String },

    #[error("manifest line {line}: invalid std `{value}`")]
    InvalidStd { line: u64, value: String },

    #[error("manifest line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("image {width}x{height} is smaller than the {side}x{side} patch")]
    ImageTooSmall {
        width: usize,
        height: usize,
        side: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("zero variance")]
    ZeroVariance,

    #[error("zero rank variance")]
    ZeroRankVariance,

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("constant objective scores")]
    ConstantObjective,

    #[error("covariance is rank deficient and epsilon is 0")]
    RankDeficient,

    #[error("training diverged: non-finite objective at iteration {iteration}")]
    TrainingDiverged { iteration: usize },

    #[error("not a model bank")]
    NotAModelBank,

    #[error("model bank version mismatch: found {found}, supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("model bank truncated")]
    Truncated,

    #[error("model bank checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("model bank has {0} trailing bytes")]
    TrailingBytes(usize),

    #[error("outlier ratio unavailable: entry {index} has no score std")]
    OutlierRatioUnavailable { index: usize },

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that mean a persisted artifact is damaged or foreign.
    pub fn is_corrupt_artifact(&self) -> bool {
        matches!(
            self,
            Error::NotAModelBank
                | Error::VersionMismatch { .. }
                | Error::Truncated
                | Error::ChecksumMismatch { .. }
                | Error::TrailingBytes(_)
        )
    }
}
