use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Some outcome probability vanishes where the operation divides by it.
    #[error("singular model: {0}")]
    SingularModel(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("rejection sampling yield below 1e-9 after {attempts} attempts ({accepted} accepted)")]
    SamplingTimeout { attempts: u64, accepted: u64 },

    /// The boundary map only applies to nonpositive (or boundary) inputs.
    #[error("input is strictly inside the space; no boundary projection defined")]
    StrictlyInterior,

    #[error("no perturbation left the space; maximum-likelihood point is not near the boundary")]
    NotNearBoundary,

    #[error("credibility integration needs at least {min} grid points, got {got}")]
    GridTooSmall { min: usize, got: usize },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }
}
