use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    UnsupportedValidation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error("{failed} of {total} replications failed")]
    Replications { failed: usize, total: u64, failures: Vec<Failure> },
}

impl CliError {
    /// Stable machine-readable tag for the error summary.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config-invalid",
            Self::UnsupportedValidation(_) => "unsupported-validation",
            Self::Io(_) | Self::Csv(_) | Self::Json(_) => "io-error",
            Self::Analysis(_) => "analysis-error",
            Self::Replications { .. } => "replication-failed",
        }
    }

    pub fn summary(&self) -> ErrorSummary<'_> {
        let failures = match self {
            Self::Replications { failures, .. } => failures.as_slice(),
            _ => &[],
        };
        ErrorSummary { status: "error", kind: self.kind(), message: self.to_string(), failures }
    }
}

impl From<mgc_cftp::Error> for CliError {
    fn from(e: mgc_cftp::Error) -> Self {
        use mgc_cftp::Error as E;
        match e {
            E::InvalidParameter(_) | E::Unstable { .. } | E::ParseService(_) => Self::Config(e.to_string()),
            E::UnsupportedValidation(_) => Self::UnsupportedValidation(e.to_string()),
            E::BudgetExceeded { .. } | E::InsufficientData(_) => Self::Analysis(e.to_string()),
        }
    }
}

/// One replication that did not produce a sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub index: u64,
    pub seed: u64,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(index: u64, seed: u64, error: &mgc_cftp::Error) -> Self {
        let kind = match error {
            mgc_cftp::Error::BudgetExceeded { .. } => "budget-exceeded",
            _ => "sampler-error",
        };
        Self { index, seed, kind, message: error.to_string() }
    }
}

/// Written to stderr as one JSON object when a command fails.
#[derive(Debug, Serialize)]
pub struct ErrorSummary<'a> {
    pub status: &'static str,
    pub kind: &'static str,
    pub message: String,
    pub failures: &'a [Failure],
}
