use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid probability value {value} at index {index} (allowed [0,1] within 1e-9)")]
    InvalidProbability { index: usize, value: f64 },

    #[error("invalid intensity value {value} at index {index} (allowed [0,1])")]
    InvalidIntensity { index: usize, value: f64 },

    #[error("invalid uncertainty value {value} at index {index} (must be finite and >= 0)")]
    InvalidUncertainty { index: usize, value: f64 },

    #[error("ensemble must have n >= 1")]
    EmptyEnsemble,

    #[error("ensemble member {index} has dims {got_h}x{got_w}, expected {want_h}x{want_w}")]
    EnsembleDimMismatch {
        index: usize,
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("dimension mismatch: {context} ({a_h}x{a_w} vs {b_h}x{b_w})")]
    DimMismatch {
        context: &'static str,
        a_h: usize,
        a_w: usize,
        b_h: usize,
        b_w: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no foreground component")]
    NoForeground,

    #[error("{path}: bad magic, expected {expected}")]
    BadMagic {
        path: PathBuf,
        expected: &'static str,
    },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}: payload shorter than header dims")]
    TruncatedPayload { path: PathBuf },

    #[error("{path}: {reason}")]
    FormatError { path: PathBuf, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("training diverged: loss is not finite at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("MCDO degenerate: dropout rate is 0, all members would be identical")]
    DegenerateMcdo,

    #[error("not enough epochs: {0}")]
    NotEnoughData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
