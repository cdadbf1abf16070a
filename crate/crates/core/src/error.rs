use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("register label collision: {0}")]
    LabelCollision(String),
    #[error("unknown register label: {0}")]
    UnknownRegister(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state is not normalized (squared norm or trace {0})")]
    NotNormalized(f64),
    #[error("operator is not a valid state: {0}")]
    InvalidState(String),
    #[error("measurement is not projective: {0}")]
    NotProjective(String),
    #[error("not an isometry (residual {0:.3e})")]
    NotIsometry(f64),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("optimizer did not converge: {0}")]
    Optimizer(String),
    #[error("Uhlmann synthesis left a fidelity gap of {gap:.3e} at history {history:?}")]
    UhlmannGap { history: Vec<u32>, gap: f64 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no transcript survives: {0}")]
    EmptyGoodSet(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
