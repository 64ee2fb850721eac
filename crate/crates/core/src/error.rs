use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed {what}: {msg}")]
    Parse { what: &'static str, msg: String },

    #[error("{0}")]
    Invalid(String),

    #[error("symmetric eigen-solver did not converge on a {0}x{0} Gram matrix")]
    NoConvergence(usize),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: &'static str, msg: impl ToString) -> Self {
        Error::Parse {
            what,
            msg: msg.to_string(),
        }
    }

    /// True for failures reading or writing the filesystem, as opposed to
    /// malformed or out-of-contract input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::Invalid(format!($($arg)*))
    };
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err($crate::error::Error::Invalid(format!($($arg)*)));
        }
    };
}

pub(crate) use ensure;
pub(crate) use invalid;
