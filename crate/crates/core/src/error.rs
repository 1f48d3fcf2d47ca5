use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {func}: {msg}")]
    Domain { func: &'static str, msg: String },

    #[error("{func} failed to converge: {msg}")]
    Convergence { func: &'static str, msg: String },

    #[error("singularity in {func} at the origin")]
    Singularity { func: &'static str },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(func: &'static str, msg: impl Into<String>) -> Error {
    Error::Domain {
        func,
        msg: msg.into(),
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
