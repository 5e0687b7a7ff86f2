use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("undefined state: {0}")]
    UndefinedState(String),

    #[error("model registration failed: {0}")]
    Registration(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("non-finite derivative at t = {t}: {what}")]
    NonFinite { t: f64, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
