use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is numerically rank deficient: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    Singular { sigma_min: f64, sigma_max: f64 },

    #[error("matrix is not orthonormal: ||V^T V - I||_F = {deviation:e}")]
    NotOrthonormal { deviation: f64 },

    #[error("matrix is not symmetric: max |A - A^T| = {deviation:e}")]
    NotSymmetric { deviation: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no orthogonal sign construction exists for d = {d}, r = {r}")]
    NoFlatBasis { d: usize, r: usize },

    #[error("spectral initialization failed: every retained eigenvalue is nonpositive")]
    DegenerateSpectral,

    #[error("run diverged at iteration {t}: {reason}")]
    Diverged { t: usize, reason: String },

    #[error("index {index} out of range for dimension {d}")]
    IndexOutOfRange { index: usize, d: usize },

    #[error("missing data: {0}")]
    Missing(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
