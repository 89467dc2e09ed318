use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("direction is not a unit vector (|v| = {norm})")]
    NotUnit { norm: f64 },
    #[error("point lies outside the closed domain")]
    OutsideDomain,
    #[error("segment leaves the closed domain")]
    SegmentLeavesDomain,
    #[error("near-tangent phase point (|nu.v| = {cosine:.3e})")]
    NearTangent { cosine: f64 },
    #[error("non-finite sample: {0}")]
    NonFinite(String),
    #[error("evaluation on the singular set: {0}")]
    Singular(String),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("numerical guard tripped: {0}")]
    NumericalGuard(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
