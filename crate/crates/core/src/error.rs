use thiserror::Error;

/// Errors returned by every fallible operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A materialized support (join, sub-join or group-by) grew past its cap.
    #[error("support of {what} exceeds cap of {cap} entries")]
    SupportTooLarge { what: String, cap: usize },

    /// The dense joined domain is too large to hold a synthetic distribution.
    #[error("joined domain of {size} cells exceeds dense cap of {cap}")]
    DomainTooLarge { size: u128, cap: u128 },

    #[error("attribute `{0}` is not in the relation schema")]
    AttributeNotInSchema(String),

    #[error("expected {expected} relations, found {found}")]
    WrongArity { expected: String, found: usize },

    #[error("two-table partitioning needs exactly two relations sharing exactly one attribute")]
    SchemaNotTwoTableChain,

    #[error("join query is not hierarchical")]
    NotHierarchical,

    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),

    #[error("query family is empty")]
    DegenerateFamily,

    #[error("bad interval: {0}")]
    BadInterval(String),

    #[error("infeasible sensitivity target: {0}")]
    InfeasibleDelta(String),

    #[error("infeasible join size vector: {0}")]
    InfeasibleVector(String),

    #[error("parameter must be a power of {base}, got {value}")]
    NonPower { base: u64, value: u64 },

    #[error("degree configuration does not match the query: {0}")]
    ConfigDomainMismatch(String),

    #[error("frequency product overflowed 64 bits")]
    Overflow,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
