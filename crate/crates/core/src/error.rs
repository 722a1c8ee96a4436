use thiserror::Error;

use crate::linalg::Vec3;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("points {0:?} and {1:?} coincide")]
    Coincident(Vec3, Vec3),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("matrix is not Hermitian (relative residual {0:.3e})")]
    NotHermitian(f64),
    #[error("{what} is singular (condition number {cond:.3e})")]
    Singular { what: String, cond: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dataset format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular { .. } | Error::NonFinite(_))
    }
}
