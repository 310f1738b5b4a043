use std::io;

use thiserror::Error;

/// Errors produced by band construction, bandwidth selection and data I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported kernel `{name}` (supported: epanechnikov, biweight, triangular)")]
    UnsupportedKernel { name: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A malformed dataset row. `row` counts data rows from 1, header excluded.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("bandwidth selection failed: {0}")]
    Selection(String),

    #[error("no usable band: {0}")]
    Band(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::UnsupportedKernel { .. }
                | Error::InvalidData(_)
                | Error::Row { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
