use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("too few usable rows: need at least {needed}, found {found}")]
    InsufficientRows { needed: usize, found: usize },

    /// The two moment equations are linearly dependent (flat inverse spectrum).
    #[error("singular moment system: {0}")]
    SingularSystem(String),

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("matrix is not positive definite: eigenvalue {value:e} at index {index}")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error("rank-deficient design matrix (rank {rank} < {dim})")]
    RankDeficient { rank: usize, dim: usize },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical model rather than of I/O or parsing.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Parse { .. } | Error::Io(_) | Error::Csv(_))
    }
}
