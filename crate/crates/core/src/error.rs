use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A loss or parameter became non-finite during training.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("target MSE {target} is unachievable; maximum achievable is {max}")]
    Unachievable { target: f64, max: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_index(index: usize, source: Error) -> Self {
        Error::AtIndex {
            index,
            source: Box::new(source),
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::DimensionMismatch(_)
            | Error::InvalidData(_)
            | Error::Unachievable { .. }
            | Error::Io { .. } => 2,
            Error::NumericalFailure(_) => 3,
            Error::AtIndex { source, .. } => source.exit_code(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_nested_cause() {
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::InvalidData("x".into()).exit_code(), 2);
        let nested = Error::at_index(4, Error::NumericalFailure("nan".into()));
        assert_eq!(nested.exit_code(), 3);
        assert!(nested.to_string().starts_with("item 4"));
    }
}
