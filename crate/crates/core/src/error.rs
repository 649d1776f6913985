use thiserror::Error;

/// Errors surfaced by loading, parsing, and the protection/verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("domain violation at row {row}, column {column}: {detail}")]
    DomainViolation {
        row: usize,
        column: String,
        detail: String,
    },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("parse error at line {line}, column {column}: {detail}")]
    Parse {
        line: usize,
        column: usize,
        detail: String,
    },

    #[error("trivial predicate at line {line}: {detail}")]
    TrivialPredicate { line: usize, detail: String },

    #[error("schema invalid: {0}")]
    InvalidSchema(String),

    #[error("ownership filter requires an owner column in the schema")]
    MissingOwnership,

    #[error("iteration cap of {0} exceeded")]
    IterationCapExceeded(usize),

    #[error("oracle enumeration budget of {0} assignments exceeded")]
    DomainTooLarge(u64),

    #[error("constraint-satisfying generation failed within budget ({0} attempts)")]
    GenerationTimeout(usize),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
