use std::io;

use thiserror::Error;

/// Errors produced anywhere in the codec.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("coordinate {value} on axis {axis} is outside [0, 1]")]
    DomainViolation { axis: usize, value: f64 },

    #[error("vertex coordinate {coord} on axis {axis} exceeds grid resolution {resolution}")]
    VertexOutOfRange { axis: usize, coord: u32, resolution: u32 },

    #[error("probe offset {probe} is outside the probing range {n_p}")]
    ProbeOutOfRange { probe: u32, n_p: u32 },

    #[error("lookup trace does not match the current codebook shapes")]
    StaleTrace,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("target size {target} bytes is below the minimum model size of {minimum} bytes")]
    TargetTooSmall { target: u64, minimum: u64 },

    #[error("model has confidence updates that were not baked")]
    UnbakedModel,

    #[error("not a model file (bad magic)")]
    BadMagic,

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("file truncated: need {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },

    #[error("invalid model file: {0}")]
    InvariantViolation(String),

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid rectangle: {0}")]
    BadRect(String),

    #[error("sweep grid is empty")]
    EmptyGrid,

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
