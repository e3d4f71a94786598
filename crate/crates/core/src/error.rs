use thiserror::Error;

use crate::characterize::ClassificationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("{what} is not positive semidefinite (most negative eigenvalue {min_eigenvalue:e})")]
    Indefinite { what: String, min_eigenvalue: f64 },

    #[error("invalid window [{k1}, {k2}] for horizon {horizon}")]
    InvalidWindow { k1: usize, k2: usize, horizon: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A characterization required as a precondition did not hold.
    #[error("{} check failed: worst residual {:e} at indices {:?} (threshold {:e})",
        .0.property, .0.worst_residual, .0.worst_indices, .0.threshold)]
    Characterization(Box<ClassificationReport>),

    #[error("oracle scale guard exceeded: (N+1)*d = {size} > {limit}")]
    ScaleGuard { size: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
