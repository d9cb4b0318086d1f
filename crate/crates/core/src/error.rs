//! Error types shared across the crate.

/// Crate-wide error type. Variants map onto the CLI exit-code classes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or parameters.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed queue state passed to a routing or metric function.
    #[error("state error: {0}")]
    State(String),
    /// A statistical estimate could not be formed (e.g. no admitted jobs).
    #[error("estimation error: {0}")]
    Estimation(String),
    /// State space too large for exact analysis.
    #[error("scale error: {0}")]
    Scale(String),
    /// A numerical solve failed to converge.
    #[error("numerical error: {msg} (residual {residual:.3e})")]
    Numerical { msg: String, residual: f64 },
    /// Too few usable points for an exponent fit.
    #[error("fit error: {0}")]
    Fit(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }
    pub fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }
    pub fn scale(msg: impl Into<String>) -> Self {
        Error::Scale(msg.into())
    }
    pub fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
