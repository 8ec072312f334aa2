use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch on {axis}: expected {expected}, got {got}")]
    ShapeMismatch { op: &'static str, axis: String, expected: usize, got: usize },

    #[error("{op}: {detail}")]
    InvalidShape { op: &'static str, detail: String },

    #[error("{op}: extent {extent} on {axis} is not divisible by {factor}")]
    NotDivisible { op: &'static str, axis: &'static str, extent: usize, factor: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("parameters without gradients: {}", .0.join(", "))]
    MissingGrad(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic in {kind} file")]
    BadMagic { kind: &'static str },

    #[error("unsupported {kind} version {found}")]
    UnsupportedVersion { kind: &'static str, found: u32 },

    #[error("truncated {kind} file: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated { kind: &'static str, offset: usize, needed: usize, available: usize },

    #[error("corrupt {kind} file: {detail}")]
    Corrupt { kind: &'static str, detail: String },

    #[error("bad spectral response table: {0}")]
    BadSrf(String),

    #[error("checkpoint does not match the requested architecture: {0}")]
    ArchitectureMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(op: &'static str, axis: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::ShapeMismatch { op, axis: axis.into(), expected, got }
    }

    pub(crate) fn invalid_shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidShape { op, detail: detail.into() }
    }
}
