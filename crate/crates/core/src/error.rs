use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid subordinator specification: {0}")]
    InvalidSpec(String),

    #[error("absorbed state: a partition with {0} cluster(s) cannot merge")]
    Absorbed(usize),

    #[error("partition is not normalized: total mass {0}")]
    Unnormalized(f64),

    #[error("path is not a bridge: endpoint mismatch {0}")]
    NotABridge(f64),

    #[error("quadrature did not converge: value {value}, error estimate {error} after {panels} panels")]
    Quadrature {
        value: f64,
        error: f64,
        panels: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Absorbed(_) => "absorbed",
            Error::Unnormalized(_) => "unnormalized",
            Error::NotABridge(_) => "not_a_bridge",
            Error::Quadrature { .. } => "quadrature",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
