use thiserror::Error;

use crate::C64;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("Gram matrix is not Hermitian (relative deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("Gram matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("point {point} lies within {distance:e} of the pole {pole}")]
    Domain { point: C64, pole: C64, distance: f64 },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("hierarchy is not nested: level {level} has defect {defect:e}")]
    NotNested { level: usize, defect: f64 },

    #[error("witness construction failed: {0}")]
    Witness(String),

    #[error("contour failure: {0}")]
    Contour(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("Jordan chain analysis inconclusive: kernel increments {increments:?} still growing at m = {max_m}")]
    Inconclusive { increments: Vec<usize>, max_m: usize },

    #[error("setup error: {0}")]
    Setup(String),

    #[error("insufficient data: {usable} usable levels, at least {required} required")]
    InsufficientData { usable: usize, required: usize },

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("invalid parameter '{name}': {reason}")]
    Parameter { name: String, reason: String },

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
