use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("environment error: {0}")]
    Environment(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Input(_) => "input",
            Error::Numeric(_) => "numeric",
            Error::Internal(_) => "internal",
            Error::Environment(_) => "environment",
            Error::Io(_) => "io",
            Error::Serde(_) => "serde",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
