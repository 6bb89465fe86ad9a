// SPDX-License-Identifier: Apache-2.0

use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments or violated preconditions.
    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed on-disk data. `field` names the header or payload part at fault.
    #[error("format error in {field}: {message}")]
    Format {
        field: &'static str,
        message: String,
    },

    /// Training produced NaN or infinite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}: bce={bce}, kl={kl}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        bce: f64,
        kl: f64,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn format(field: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            field,
            message: message.into(),
        }
    }
}
