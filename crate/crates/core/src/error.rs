use thiserror::Error;

pub type Result<T, E = OiError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OiError {
    #[error("dimension mismatch: expected {expected} bits, found {found}")]
    DimensionMismatch { expected: u32, found: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("query budget of {budget} oracle calls exceeded")]
    QueryBudgetExceeded { budget: u32 },

    #[error("construction did not terminate within {iterations} iterations")]
    NonTermination { iterations: usize },

    #[error("subpopulation `{0}` has zero mass")]
    EmptySubpopulation(String),

    #[error("distinguisher `{0}` is randomized; a deterministic rule is required")]
    NotDeterministic(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("property not satisfied: {0}")]
    PropertyNotSatisfied(String),

    #[error("oracle answers are inconsistent: {0}")]
    OracleInconsistent(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl OiError {
    pub fn config(msg: impl Into<String>) -> Self {
        OiError::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        OiError::Domain(msg.into())
    }
}
