//! Numerical tolerances shared by every module.
//!
//! The defaults are used by the free functions; callers that need different
//! thresholds construct their own [`Tolerances`] and pass it to the `*_with`
//! variants.

use serde::{Deserialize, Serialize};

/// Absolute tolerance on `||V^T V - I||_F` for orthonormal bases.
pub const ORTHONORMAL_ABS: f64 = 1e-10;
/// Relative tolerance for reconstructions (`V V^T Z = Z`, eigen residuals).
pub const RECONSTRUCTION_REL: f64 = 1e-8;
/// Absolute tolerance on `max |A - A^T|` for symmetric inputs.
pub const SYMMETRY_ABS: f64 = 1e-10;
/// A matrix is treated as rank deficient when `sigma_min <= RANK_REL * sigma_max`.
pub const RANK_REL: f64 = 1e-12;
/// Unit operator norm tolerance for initialization directions.
pub const UNIT_NORM_ABS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub orthonormal_abs: f64,
    pub reconstruction_rel: f64,
    pub symmetry_abs: f64,
    pub rank_rel: f64,
    pub unit_norm_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            orthonormal_abs: ORTHONORMAL_ABS,
            reconstruction_rel: RECONSTRUCTION_REL,
            symmetry_abs: SYMMETRY_ABS,
            rank_rel: RANK_REL,
            unit_norm_abs: UNIT_NORM_ABS,
        }
    }
}
