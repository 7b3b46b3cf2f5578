//! Initialization directions (Gaussian, orthogonal, spectral) and the
//! alignment diagnostic `sigma_r(V*^T Z)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::groundtruth::GroundTruth;
use crate::matops::{
    gaussian, haar_orthonormal, op_norm, sigma_k, top_eig_sym, DenseMatrix, OrthonormalBasis,
};
use crate::rng::StreamKey;
use crate::sampling::ObservedEntries;
use crate::tolerance::UNIT_NORM_ABS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    Gaussian,
    Orthogonal,
    Spectral,
}

impl std::fmt::Display for InitScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitScheme::Gaussian => "gaussian",
            InitScheme::Orthogonal => "orthogonal",
            InitScheme::Spectral => "spectral",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub r_prime: usize,
    pub alpha: f64,
    pub seed: u64,
}

/// Unit-operator-norm direction `Z` for `U_0 = alpha Z`.
///
/// The spectral scheme reads only the observed entries.
pub fn init_direction(spec: &InitSpec, observed: &ObservedEntries) -> Result<DenseMatrix> {
    let d = observed.obs().d();
    let rp = spec.r_prime;
    if rp == 0 || rp > d {
        return Err(invalid(
            "r_prime",
            format!("need 1 <= r' <= d = {d}, got {rp}"),
        ));
    }
    let mut rng = StreamKey::new(spec.seed, "init")
        .with_str(&spec.scheme.to_string())
        .with_u64(d as u64)
        .with_u64(rp as u64)
        .rng();
    let z = match spec.scheme {
        InitScheme::Gaussian => {
            let g = gaussian(&mut rng, d, rp);
            let n = op_norm(&g);
            g / n
        }
        InitScheme::Orthogonal => {
            if rp != d {
                return Err(invalid(
                    "r_prime",
                    format!("orthogonal initialization needs r' = d = {d}, got {rp}"),
                ));
            }
            haar_orthonormal(&mut rng, d, d).into_inner()
        }
        InitScheme::Spectral => spectral_direction(observed, rp)?,
    };
    Ok(z)
}

fn spectral_direction(observed: &ObservedEntries, rp: usize) -> Result<DenseMatrix> {
    let zero = DenseMatrix::zeros(observed.obs().d(), observed.obs().d());
    // R_Omega(X*) = R_Omega(X* - 0)
    let estimate = observed.residual_operator(&zero);
    let eig = top_eig_sym(&estimate, rp)?;
    let mut u = eig.vectors.into_inner();
    let mut any_positive = false;
    for (j, &lambda) in eig.values.iter().enumerate() {
        let clamped = lambda.max(0.0);
        any_positive |= clamped > 0.0;
        u.column_mut(j).scale_mut(clamped.sqrt());
    }
    if !any_positive {
        return Err(Error::DegenerateSpectral);
    }
    let n = op_norm(&u);
    Ok(u / n)
}

/// `sigma_r(V*^T Z)` with `r = rank(V*)`.
pub fn alignment_score(z: &DenseMatrix, vstar: &OrthonormalBasis) -> Result<f64> {
    if z.nrows() != vstar.dim() {
        return Err(Error::Dimension(format!(
            "Z has {} rows, basis has {}",
            z.nrows(),
            vstar.dim()
        )));
    }
    let n = op_norm(z);
    if (n - 1.0).abs() > UNIT_NORM_ABS {
        return Err(invalid(
            "z",
            format!("expected unit operator norm, got {n}"),
        ));
    }
    Ok(sigma_k(&(vstar.matrix().transpose() * z), vstar.rank()))
}

/// `U_0 = alpha Z`.
pub fn scale_init(z: &DenseMatrix, alpha: f64) -> Result<DenseMatrix> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid("alpha", format!("need alpha > 0, got {alpha}")));
    }
    Ok(z * alpha)
}

/// `c_alpha * sigma_r / (kappa^{1.5} d)`, the exact-parameterization scale.
pub fn theorem_alpha(gt: &GroundTruth, c_alpha: f64) -> f64 {
    c_alpha * gt.sigma_r() / (gt.kappa.powf(1.5) * gt.d as f64)
}

pub const DEFAULT_C_ALPHA: f64 = 0.1;
