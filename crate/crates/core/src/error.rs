use thiserror::Error;

/// Every failure the laboratory can report.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("unknown method `{0}` (see `list-schemes`)")]
    UnknownMethod(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate asset `{asset}`: {reason}")]
    DegenerateAsset { asset: String, reason: String },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("modularity is undefined for a graph without links")]
    UndefinedModularity,

    #[error("improvement is undefined for a zero baseline")]
    UndefinedImprovement,

    #[error("parse error at row {row}, column {column}: {reason}")]
    Parse {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("date ordering violated at row {row}: {reason}")]
    Ordering { row: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn degenerate(asset: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::DegenerateAsset {
            asset: asset.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
