use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes across the forward and inverse pipelines.
///
/// Variants split into input problems (`is_validation`) and numerical or
/// identifiability failures on otherwise well-formed input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("desk-scale exceeded: {0}")]
    DeskScaleExceeded(String),

    #[error("not a stationary GTR distribution: {0}")]
    NotStationary(String),

    #[error("not a rate-across-sites GTR distribution: {0}")]
    NotSimultaneouslyDiagonalizable(String),

    #[error("inconsistent three-way value: {0}")]
    InconsistentD(String),

    #[error("degenerate instance: {0}")]
    DegenerateBeta(String),

    #[error("non-identifiable (kappa=2 symmetric): {0}")]
    NonIdentifiableBinary(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("recovery failed: {0}")]
    RecoveryFailed(String),

    #[error("inconsistent tensor: {0}")]
    InconsistentTensor(String),

    #[error("not a tree metric: {0}")]
    NotTreeMetric(String),

    #[error("newick parse error at byte {pos}: {msg}")]
    Newick { pos: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by malformed or out-of-contract input.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Domain(_)
                | Error::DeskScaleExceeded(_)
                | Error::NotStationary(_)
                | Error::Newick { .. }
                | Error::Format(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Format(e.to_string())
        }
    }
}
