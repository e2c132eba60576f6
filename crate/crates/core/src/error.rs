use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("correlation matrix is not positive semidefinite (pivot {pivot}: {value:e})")]
    NotPositiveSemidefinite { pivot: usize, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("state {0:?} is not in the open positive orthant")]
    InvalidState(Vec<f64>),

    #[error("latent point {0:?} is outside the image set")]
    OutsideImage(Vec<f64>),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("guard exceeded: {0}")]
    Guard(String),

    #[error("non-finite {what} at path {path}, date {date}")]
    NonFinite {
        what: &'static str,
        path: usize,
        date: usize,
    },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("config: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for the command-line runner: 2 for bad input,
    /// 3 for numerical guards and divergence, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Guard(_) | Error::Divergence(_) | Error::NonFinite { .. } => 3,
            Error::Io(_) => 4,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
