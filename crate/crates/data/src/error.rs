use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line} (byte offset {offset}): {message}")]
    Parse {
        line: usize,
        offset: u64,
        message: String,
    },

    #[error("invalid record at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("unsupported schema version {0}")]
    UnsupportedSchema(u32),

    #[error("dangling reference: {0}")]
    Reference(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("manifest error: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, DataError>;
