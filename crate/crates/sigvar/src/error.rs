//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("cluster `{label}` is empty")]
    EmptyCluster { label: String },

    #[error("need at least 2 non-empty clusters, got {got}")]
    TooFewClusters { got: usize },

    #[error("invalid parameter vector: {reason}")]
    InvalidParameters { reason: String },

    #[error("swarm needs at least 2 particles, got {got}")]
    TooFewParticles { got: usize },

    #[error(
        "fitness returned a non-finite value for particle {particle} at iteration {iteration}"
    )]
    NonFiniteFitness { particle: usize, iteration: usize },

    #[error("sigma must be positive, got {sigma}")]
    NonPositiveSigma { sigma: f64 },

    #[error("kernel radius must be at least 1, got {radius}")]
    InvalidKernelRadius { radius: usize },

    #[error("zero-area image ({width}x{height})")]
    ZeroAreaImage { width: u32, height: u32 },

    #[error("no foreground ink after segmentation")]
    EmptyForeground,

    #[error("expected ink-dark-on-light input")]
    WrongPolarity,

    #[error("expected a {expected_width}x{expected_height} image, got {width}x{height}")]
    WrongImageSize {
        expected_width: u32,
        expected_height: u32,
        width: u32,
        height: u32,
    },

    #[error("vector store, line {line}: {reason}")]
    StoreParse { line: usize, reason: String },

    #[error("training set needs at least one sample of each class")]
    EmptyClass,

    #[error("gamma must be positive, got {gamma}")]
    NonPositiveGamma { gamma: f64 },

    #[error("solver did not converge within {iterations} steps (KKT violation {violation:.3e})")]
    NoConvergence { iterations: usize, violation: f64 },

    #[error("score sets must be non-empty")]
    EmptyScores,

    #[error("writer {writer}: {reason}")]
    InsufficientSamples { writer: u32, reason: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("unsupported schema version {found}, this build reads up to {supported}")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("external duplicator: {0}")]
    Adapter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    ImageCodec(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
