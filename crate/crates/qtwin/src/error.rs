//! Error type shared across the simulation, probing, surrogate, and
//! optimization modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value violated a domain precondition (non-finite voltage,
    /// pulse longer than the encoder capacity, invalid fractions, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration file or preset failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// A numeric computation produced a non-finite intermediate.
    #[error("numeric failure in {context}: {message}")]
    Numeric { context: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
