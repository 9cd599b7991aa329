use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("point lies behind the camera (homogeneous depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("refusing to overwrite existing file {0} (use --force)")]
    Exists(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable class used by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::OutOfDomain(_) => "out-of-domain",
            Error::BehindCamera { .. } => "behind-camera",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Exists(_) => "exists",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}
