use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// `values.len()` disagrees with the product of the requested extents.
    #[error("structural error: shape {shape:?} needs {expected} values, got {actual}")]
    Structure {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("tensors belong to different graphs")]
    GraphMismatch,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index {index} out of range for {len} items")]
    Bounds { index: u64, len: u64 },
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("parameter {path} has shape {actual:?}, expected {expected:?}")]
    ParameterShape {
        path: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("class {class} has {available} examples, {required} required")]
    InsufficientExamples {
        class: String,
        available: usize,
        required: usize,
    },
    #[error("collation error: {0}")]
    Collation(String),
    #[error("transform error: {0}")]
    Transform(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("checksum mismatch for {path}: expected {expected}, found {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("missing path {0}")]
    MissingPath(PathBuf),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
