use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes or spatial sizes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller-supplied argument is outside its documented range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A function was used outside its contract (e.g. non-scalar gradient check target).
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    /// Malformed checkpoint or config file.
    #[error("format error: {0}")]
    Format(String),

    #[error("checkpoint checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    /// Training produced a NaN/Inf loss.
    #[error("non-finite {component} loss at iteration {iter}")]
    NonFinite {
        iter: usize,
        component: &'static str,
    },

    #[error("augmentation job failed: {0}")]
    Job(String),

    #[error("benchmark protocol error: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(format!($($arg)*)) };
}
pub(crate) use dim_err;
