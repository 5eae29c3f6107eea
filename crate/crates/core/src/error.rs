use thiserror::Error;

/// Errors raised by the simulator and its analysis layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integrator tolerance violated: {0}")]
    Integrator(String),

    #[error("numerical failure at t = {time:.6e} s: {message}")]
    Numerical { time: f64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
