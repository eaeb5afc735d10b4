use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Shape,
    Verification,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("LENGTH_MISMATCH: {expected} elements required by shape, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("RANK_EXCEEDED: rank {0} exceeds the maximum of 4")]
    RankExceeded(usize),
    #[error("SHAPE_MISMATCH: {0}")]
    ShapeMismatch(String),
    #[error("CHANNEL_MISMATCH: input has {input} channels, kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("DTYPE_MISMATCH: {0}")]
    DtypeMismatch(String),
    #[error("SPATIAL_TOO_SMALL: {height}x{width} cannot be pooled by a 2x2 window")]
    SpatialTooSmall { height: usize, width: usize },
    #[error("NOT_SCALAR: loss node has shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("NONFINITE: loss evaluated to {0}")]
    NonFinite(f64),
    #[error("BAD_RANGE: low exponent {lo} exceeds high exponent {hi}")]
    BadRange { lo: i32, hi: i32 },
    #[error("NOT_DECREASING: dense units {0:?} must be strictly decreasing")]
    NotDecreasing(Vec<usize>),
    #[error("INPUT_TOO_SMALL: backbone needs spatial extents >= 32, got {height}x{width}")]
    InputTooSmall { height: usize, width: usize },
    #[error("BAD_RATE: dropout rate {0} outside [0, 1)")]
    BadRate(f64),
    #[error("DEPTH_EXCEEDED: freeze depth {depth} exceeds {available} backbone layers")]
    DepthExceeded { depth: usize, available: usize },
    #[error("BAD_CONFIG: {key}: {reason}")]
    BadConfig { key: String, reason: String },
    #[error("LABEL_OUT_OF_RANGE: label {label} for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("CLASS_COUNT_MISMATCH: model has {model} classes, data has {data}")]
    ClassCountMismatch { model: usize, data: usize },
    #[error("EMPTY_DATASET")]
    EmptyDataset,
    #[error("BAD_FRACTIONS: {0:?} must be non-negative and sum to 1")]
    BadFractions([f64; 3]),
    #[error("BAD_MAGIC: {0}")]
    BadMagic(String),
    #[error("BAD_MAXVAL: maxval {0}, only 255 is supported")]
    BadMaxval(u32),
    #[error("BAD_HEADER: {0}")]
    BadHeader(String),
    #[error("TRUNCATED: {0}")]
    Truncated(String),
    #[error("NO_CLASSES: {0} needs at least two class directories")]
    NoClasses(PathBuf),
    #[error("EMPTY_CLASS: {0} holds no images")]
    EmptyClass(PathBuf),
    #[error("BAD_SIZE: {0}")]
    BadSize(String),
    #[error("BAD_VERSION: checkpoint version {0}, expected 1")]
    BadVersion(u32),
    #[error("CRC_MISMATCH: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("NAME_MISMATCH: missing {missing:?}, extra {extra:?}")]
    NameMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("IO_WRITE: {path}: {source}")]
    IoWrite {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("IO: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    AtPath {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::BadConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::AtPath {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with path context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPath { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self.root() {
            BadRange { .. } | NotDecreasing(_) | BadRate(_) | BadConfig { .. } | BadFractions(_)
            | DepthExceeded { .. } => ErrorKind::Config,
            BadMagic(_) | BadMaxval(_) | BadHeader(_) | Truncated(_) | NoClasses(_)
            | EmptyClass(_) | BadVersion(_) | CrcMismatch { .. } | IoWrite { .. } | Io { .. } => {
                ErrorKind::Io
            }
            NonFinite(_) => ErrorKind::Verification,
            _ => ErrorKind::Shape,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
