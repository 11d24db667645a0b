use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        dim: String,
        expected: String,
        found: String,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("{op}: non-finite value produced")]
    NonFinite { op: String },

    #[error("invalid network config at layer `{layer}`: {msg}")]
    Config { layer: String, msg: String },

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("layer `{0}` was not captured in the activation trace")]
    NotCaptured(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("weight file: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("weight file: unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("weight file: truncated")]
    Truncated,

    #[error("weight file: {0}")]
    Format(String),

    #[error("weight file: tensor `{name}` has shape {found:?}, network expects {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("weight file: missing tensor `{0}`")]
    MissingTensor(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        dim: impl Into<String>,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::ShapeMismatch {
            op,
            dim: dim.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument { op, msg: msg.into() }
    }
}
