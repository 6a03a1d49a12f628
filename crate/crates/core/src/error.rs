use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point depth {0} is not in front of the camera")]
    NonPositiveDepth(f64),
    #[error("invalid depth range: {0}")]
    InvalidRange(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("cost volume needs at least one measurement frame")]
    EmptyMeasurementSet,
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("spatial scale factor {0} outside [1.0, 2.0]")]
    InvalidFactor(f64),
    #[error("resolution mismatch: prediction {pred:?} vs ground truth {gt:?}")]
    ResolutionMismatch {
        pred: (usize, usize),
        gt: (usize, usize),
    },
    #[error("no pixel is valid in both prediction and ground truth")]
    EmptyOverlap,
    #[error("timestamp association produced no entries")]
    EmptyResult,
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("unsupported bit depth or color type in {path}: {found}")]
    BitDepth { path: PathBuf, found: String },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("parse error in {path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
