use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("eigenvalue collision: separation {separation:e} below {threshold:e}")]
    EigenvalueCollision { separation: f64, threshold: f64 },

    #[error("bad ensemble spec: {0}")]
    BadSpec(String),

    #[error("channel condition violated: {0}")]
    ConditionViolation(String),

    #[error("kernel construction failed verification: {0}")]
    SingularConstruction(String),

    #[error("initial kernels violate the relay power set: {0}")]
    InfeasibleStart(String),

    #[error("decomposition impossible: {0}")]
    DecompositionImpossible(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bad sweep config: {0}")]
    BadConfig(String),

    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
