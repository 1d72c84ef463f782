use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor dimensions do not line up for the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input is valid in shape but carries no usable signal (e.g. a constant image
    /// for phase correlation).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged: non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("image: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad checkpoint magic {0:?}, expected \"FLKR\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("unexpected end of checkpoint")]
    UnexpectedEof,
    #[error("tensor {name:?}: shape {dims:?} overflows")]
    ShapeOverflow { name: String, dims: Vec<u32> },
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("trailing bytes after last tensor")]
    TrailingBytes,
    #[error("unexpected tensor names in checkpoint: {}", .0.join(", "))]
    UnexpectedNames(Vec<String>),
    #[error("checkpoint is missing tensors: {}", .0.join(", "))]
    MissingNames(Vec<String>),
    #[error("tensor {name:?}: checkpoint shape {found:?} does not match model shape {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl Error {
    /// An I/O error whose message names the file involved.
    pub fn io_at(path: &std::path::Path, e: std::io::Error) -> Self {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    }
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
