use thiserror::Error;

/// Errors produced by the library and surfaced by the CLI as
/// `ERROR <code>: <detail>` lines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix of size {n} not positive definite at pivot {pivot} (jitter exhausted at {jitter:e})")]
    NotPositiveDefinite { n: usize, pivot: usize, jitter: f64 },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("unsupported dimension d = {dim}: {reason}")]
    UnsupportedDimension { dim: usize, reason: String },

    #[error("negative variance {value:e} beyond roundoff tolerance in {context}")]
    NegativeVariance { value: f64, context: String },

    #[error("degenerate factor extension at step {step}: non-positive conditional variance")]
    DegenerateExtension { step: usize },

    #[error("missing data vector: {0}")]
    MissingData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite kernel value for point pair ({i}, {j})")]
    NonFiniteKernel { i: usize, j: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("size cap exceeded: n = {n} > {cap} (dense O(n^3) budget)")]
    SizeCap { n: usize, cap: usize },
}

impl Error {
    /// Short machine-readable code for the CLI diagnostic stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DOMAIN",
            Error::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            Error::NotPositiveDefinite { .. } => "NOT_POSITIVE_DEFINITE",
            Error::SizeMismatch(_) => "SIZE_MISMATCH",
            Error::InvalidDesign(_) => "INVALID_DESIGN",
            Error::UnsupportedDimension { .. } => "UNSUPPORTED_DIMENSION",
            Error::NegativeVariance { .. } => "NEGATIVE_VARIANCE",
            Error::DegenerateExtension { .. } => "DEGENERATE_EXTENSION",
            Error::MissingData(_) => "MISSING_DATA",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::NonFiniteKernel { .. } => "NON_FINITE_KERNEL",
            Error::Parse(_) => "PARSE",
            Error::Io { .. } => "IO",
            Error::SizeCap { .. } => "SIZE_CAP",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
