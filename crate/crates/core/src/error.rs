use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unstable queue: rho = {rho} must be below c = {servers}")]
    Unstable { rho: f64, servers: usize },

    #[error("cannot parse service distribution `{0}`")]
    ParseService(String),

    #[error("event budget of {limit} reversed-time events exceeded")]
    BudgetExceeded { limit: u64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("validation requires exponential service, got {0}")]
    UnsupportedValidation(String),
}
