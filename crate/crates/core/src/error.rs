use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Fail with `InvalidArgument` unless `cond` holds.
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::InvalidArgument(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
