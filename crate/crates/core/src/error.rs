use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("malformed CSV at row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unexpected column `{0}`")]
    UnexpectedColumn(String),

    #[error("row {row}: unknown value `{value}` for categorical feature `{feature}`")]
    UnknownCategory { row: usize, feature: String, value: String },

    #[error("row {row}: feature `{feature}` is not a finite real (`{value}`)")]
    NonFinite { row: usize, feature: String, value: String },

    #[error("row {row}: missing value for `{feature}`")]
    MissingValue { row: usize, feature: String },

    #[error("row {row}: unknown class label `{label}`")]
    UnknownClass { row: usize, label: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset has no labels")]
    Unlabeled,

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("score shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("model returned a non-finite score")]
    NonFiniteScore,

    #[error("objective is not finite at probe point {point:?}")]
    NonFiniteProbe { point: Vec<f64> },

    #[error("remote model: {0}")]
    Transport(String),

    #[error("model does not expose decision paths")]
    NoPaths,

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the model itself (query transport, bad responses).
    pub fn is_model_error(&self) -> bool {
        matches!(
            self,
            Error::Transport(_) | Error::ShapeMismatch { .. } | Error::NonFiniteScore
        )
    }
}
