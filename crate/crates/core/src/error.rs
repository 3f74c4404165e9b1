use std::path::PathBuf;

use crate::SourceId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("degenerate data: total variance is zero")]
    DegenerateData,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("empty set: {0}")]
    EmptySet(&'static str),
    #[error("mixed metric kinds in one normalization")]
    MixedKinds,
    #[error("degenerate universe: every metric value is zero")]
    DegenerateUniverse,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image too small: {height}x{width}, need at least {min}x{min}")]
    ImageTooSmall { height: usize, width: usize, min: usize },
    #[error("dimensions {height}x{width} are not multiples of 8")]
    NotBlockAligned { height: usize, width: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: {0}")]
    Truncated(&'static str),
    #[error("dimension overflow: {rows}x{cols}")]
    DimensionOverflow { rows: u64, cols: u64 },

    #[error("empty embedding channel: no nonzero AC coefficient")]
    EmptyEmbeddingChannel,
    #[error("payload bisection did not converge in {0} steps")]
    BisectionDiverged(usize),

    #[error("no detector for source {0}")]
    MissingDetector(SourceId),
    #[error("no evaluation set for source {0}")]
    MissingEvalSet(SourceId),
    #[error("targets not covered by any source below the regret threshold: {0:?}")]
    OrphanTargets(Vec<SourceId>),
    #[error("every candidate source was filtered out for target {0}")]
    AllPairsFiltered(SourceId),
    #[error("no candidate sources")]
    EmptyCandidates,
    #[error("class {class} has {got} samples, need at least {needed}")]
    ClassTooSmall { class: SourceId, got: usize, needed: usize },

    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("artifact {path} has config hash {found}, expected {expected}")]
    HashMismatch { path: PathBuf, expected: String, found: String },
    #[error("self-consistency audit failed: {0}")]
    Audit(String),
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// True for errors caused by a malformed configuration rather than by data.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::EmptyGrid | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
