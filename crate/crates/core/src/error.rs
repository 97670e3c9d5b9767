use thiserror::Error;

use crate::attacks::{CountBounds, PartialRecovery};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("privacy budget exhausted: spent {spent:e} of cap {cap:e}, requested {requested:e}")]
    BudgetExhausted { spent: f64, cap: f64, requested: f64 },

    #[error("attack not applicable: {0}")]
    NotApplicable(String),

    #[error("budget exhausted mid-search; count known to lie in [{}, {}]", .bounds.lower, .bounds.upper)]
    PartialCount { bounds: CountBounds },

    #[error("budget exhausted after recovering {} value group(s)", .partial.groups.len())]
    PartialReconstruction { partial: Box<PartialRecovery> },

    #[error("inconsistent observations: {0}")]
    Inconsistent(String),

    #[error("instance too large for brute force: n={n}, domain={domain}, k={k} (limits n<=8, domain<=5, k<=2)")]
    InstanceTooLarge { n: usize, domain: u128, k: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("schema file: {0}")]
    SchemaFile(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by running out of privacy budget.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::BudgetExhausted { .. }
                | Error::PartialCount { .. }
                | Error::PartialReconstruction { .. }
        )
    }
}
