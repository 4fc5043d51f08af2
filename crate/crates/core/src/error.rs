use std::path::PathBuf;

use thiserror::Error;

use crate::rbm::{BetaRbmParams, MixedRbmParams};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Parameters captured before a training step blew up.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    Beta(BetaRbmParams),
    Mixed(MixedRbmParams),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite values in parameter block `{block}`")]
    NonFinite { block: String },

    #[error("non-finite log-density at pixel {pixel}")]
    NonFiniteDensity { pixel: usize },

    #[error("training diverged at epoch {epoch} (block `{block}`)")]
    Diverged {
        epoch: usize,
        block: String,
        last_good: Box<Checkpoint>,
    },

    #[error("malformed model container: {0}")]
    Container(String),

    #[error("malformed image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dim(what, expected, got))
    }
}
