use std::io;

use thiserror::Error;

/// Errors produced by the retrieval engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("table `{id}`: ragged grid: {detail}")]
    RaggedGrid { id: String, detail: String },

    #[error("column index {index} out of range for table with {columns} columns")]
    ColumnOutOfRange { index: usize, columns: usize },

    #[error("table `{0}` has no columns")]
    NoColumns(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("term set of kind {kind} cannot be projected into the {space} space")]
    IncompatibleSpace { kind: &'static str, space: &'static str },

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("missing resource: {0}")]
    MissingResource(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<bincode::Error> for Error {
    fn from(e: bincode::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
