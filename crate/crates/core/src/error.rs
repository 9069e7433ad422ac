use std::path::PathBuf;

/// Errors produced by plants, controllers, metrics and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("closed-loop protocol violation: {0}")]
    Protocol(String),

    #[error("trajectory log is empty")]
    EmptyLog,

    #[error("missing value in trajectory log at step {k}: {what}")]
    MissingLogValue { k: usize, what: &'static str },

    #[error("no comparator available for step {0}")]
    MissingComparator(usize),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
