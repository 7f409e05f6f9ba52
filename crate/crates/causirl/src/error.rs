use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// Model or run configuration is internally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Array dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation needs more rows than the batch provides.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    /// NaN or infinity where a finite value is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid argument from the caller.
    #[error("input error: {0}")]
    Input(String),

    /// An API was used outside its stated mode or sequencing.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A data file could not be parsed.
    #[error("parse error in {file} at line {line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    /// Downloaded file failed checksum verification.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
