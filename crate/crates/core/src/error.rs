use thiserror::Error;

/// Errors produced by the fbspca pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("design matrix is rank deficient: smallest/largest singular value ratio {ratio:e}")]
    RankDeficient { ratio: f64 },

    #[error("eigendecomposition failed to converge for block k={block}")]
    Convergence { block: usize },

    #[error("noise variance estimate did not stabilize (last iterate {last})")]
    NoiseEstimate { last: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed {kind}: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }

    /// True for failures that come from the numerics rather than from usage or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::Convergence { .. }
                | Error::NoiseEstimate { .. }
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
