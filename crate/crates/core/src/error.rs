use thiserror::Error;

use crate::gan_models::ScaleModel;
use crate::pyramid::Dims;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image too small: {dims} is below the {min_dim}px minimum side")]
    ImageTooSmall { dims: Dims, min_dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: Dims, got: Dims },

    #[error("scale {requested} unavailable: bundle holds scales 0..{available}")]
    ScaleUnavailable { requested: usize, available: usize },

    #[error("training diverged at scale {scale}, iteration {iteration}: {what}")]
    Divergence {
        scale: usize,
        iteration: usize,
        what: String,
    },

    #[error("training of scale {scale} was cancelled")]
    Cancelled { scale: usize },

    #[error("worker for scale {scale} failed twice: {message}")]
    WorkerFailed {
        scale: usize,
        message: String,
        /// Scales that completed before the job failed.
        partial: Box<Vec<ScaleModel>>,
    },

    #[error(transparent)]
    Bundle(#[from] BundleError),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("job {job_id} has no published scales yet")]
    NotReady { job_id: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

/// Failures decoding or verifying a serialized bundle. Each variant has a
/// stable numeric code for wire responses.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BundleError {
    #[error("not a bundle: bad magic header")]
    BadMagic,
    #[error("unsupported bundle format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("content hash mismatch for {what}")]
    HashMismatch { what: String },
    #[error("truncated bundle: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("corrupt compressed stream: {0}")]
    Corrupt(String),
}

impl BundleError {
    pub fn code(&self) -> u16 {
        match self {
            BundleError::BadMagic => 10,
            BundleError::VersionMismatch { .. } => 11,
            BundleError::HashMismatch { .. } => 12,
            BundleError::Truncated { .. } => 13,
            BundleError::Manifest(_) => 14,
            BundleError::Corrupt(_) => 15,
        }
    }
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::ImageTooSmall { .. }
            | Error::DimMismatch { .. }
            | Error::ScaleUnavailable { .. } => 2,
            Error::Divergence { .. } | Error::WorkerFailed { .. } | Error::Cancelled { .. } => 3,
            Error::Bundle(_) | Error::Protocol(_) | Error::NotReady { .. } => 4,
            Error::Io(_) | Error::Codec(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ImageTooSmall { .. } => "image_too_small",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::ScaleUnavailable { .. } => "scale_unavailable",
            Error::Divergence { .. } => "divergence",
            Error::WorkerFailed { .. } => "worker_failed",
            Error::Cancelled { .. } => "cancelled",
            Error::Bundle(_) => "bundle",
            Error::Protocol(_) => "protocol",
            Error::NotReady { .. } => "not_ready",
            Error::Io(_) => "io",
            Error::Codec(_) => "codec",
        }
    }
}
