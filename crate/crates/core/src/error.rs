use thiserror::Error;

use crate::spectral::Geometry;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("level 0 (the constant eigenfunction) is excluded from every expansion")]
    ConstantLevel,

    #[error(
        "truncation at {max_level} levels leaves relative tail mass {tail:e}, above tolerance {tolerance:e}"
    )]
    TruncationTooShort {
        max_level: usize,
        tail: f64,
        tolerance: f64,
    },

    #[error("operation requires {expected} geometry, got {found:?}")]
    GeometryMismatch {
        expected: &'static str,
        found: Geometry,
    },

    #[error("regularity of an explicit coefficient list without an asymptotic rule is indeterminate")]
    IndeterminateRegularity,

    #[error("covariance matrix is indefinite beyond jitter tolerance (most negative eigenvalue {min_eigenvalue:e})")]
    Indefinite { min_eigenvalue: f64 },

    #[error("reference curvature vanishes at grid point {0}")]
    VanishingCurvature(usize),

    #[error("field `{0}` is required but was not provided")]
    MissingField(&'static str),

    #[error("triangulation is not a closed 2-manifold: {0}")]
    NonManifold(String),

    #[error("grid is empty")]
    EmptyGrid,

    #[error("grid point {index} is invalid: {reason}")]
    InvalidPoint { index: usize, reason: String },

    #[error("spectrum file line {line}: {reason}")]
    SpectrumFile { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
