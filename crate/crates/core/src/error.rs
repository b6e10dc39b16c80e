use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("right node {node} has no neighbors; no cover set exists")]
    Uncoverable { node: usize },

    #[error(
        "exact verification needs {needed} subsets but the budget is {budget}; \
         raise the budget or use sampled mode"
    )]
    EnumerationCap { needed: u128, budget: u128 },

    #[error("penalty violates the Kraft inequality over the candidate set (sum = {sum})")]
    Kraft { sum: f64 },

    #[error("regime error: {0}")]
    Regime(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
