use thiserror::Error;

/// Errors raised by estimation, testing and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at {context}")]
    NonFinite { context: String },

    #[error("design matrix is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },

    #[error("portfolio {index} has zero residual variance")]
    DegeneratePortfolio { index: usize },

    #[error("series has zero variance")]
    ConstantSeries,

    #[error("null sample pool is empty")]
    EmptyPool,

    #[error("null sample pool has {available} rows, {required} required")]
    PoolTooSmall { required: usize, available: usize },

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: String,
        line: u64,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Whether the failure is numerical (as opposed to malformed input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::DegeneratePortfolio { .. }
                | Error::ConstantSeries
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
