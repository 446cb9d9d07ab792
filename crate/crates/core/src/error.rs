use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty indicator column")]
    EmptyIndicator,

    #[error("indicator `{0}` not present on region `{1}`")]
    MissingIndicator(String, String),

    #[error("city `{0}` is in neither the train nor the test city set")]
    UnassignedCity(String),

    #[error("indicator `{0}` is in neither the train nor the test-only indicator set")]
    UnassignedIndicator(String),

    #[error("invalid split config: {0}")]
    InvalidSplit(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("{path}:{line}: {msg}")]
    Record { path: String, line: usize, msg: String },

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("reward spec {spec:?} does not match task kind {kind:?}")]
    RewardSpecMismatch {
        kind: crate::model::TaskKind,
        spec: crate::model::RewardSpec,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("undefined R² on constant target")]
    ConstantTarget,

    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value at step {step}: {msg}\n{dump}")]
    NonFinite { step: u64, msg: String, dump: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
