use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    #[error("undecidable: {0}")]
    Undecidable(String),

    /// Quadrature did not reach the requested tolerance. The partial value is kept.
    #[error("accuracy not reached for {context}: partial value {partial}, error estimate {error}")]
    Accuracy {
        context: String,
        partial: f64,
        error: f64,
    },

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid symbol: Re psi = {re} < 0 at mode {mode}")]
    InvalidSymbol { mode: String, re: f64 },

    #[error("path {path} diverged at time {time}")]
    Divergence { path: usize, time: f64 },

    #[error("test function outside the admissible class: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CoreError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::InvalidInput(format!("json: {e}"))
    }
}
