//! Bernoulli observation masks and the projection operators built on them.
//!
//! Masks are not symmetric: each ordered pair `(i, j)`, diagonal included, is
//! an independent Bernoulli(p) draw. Symmetry enters only through `R_Omega`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matops::{sym_op_norm, DenseMatrix};
use crate::rng::StreamKey;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    d: usize,
    p: f64,
    seed: u64,
    /// Row-major `d x d` indicator.
    mask: Vec<u8>,
}

impl ObservationSet {
    /// Builds an observation set from an explicit row-major indicator.
    pub fn from_mask(d: usize, p: f64, seed: u64, mask: Vec<u8>) -> Result<Self> {
        check_rate(p)?;
        if mask.len() != d * d {
            return Err(Error::Dimension(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                d * d
            )));
        }
        if mask.iter().any(|&b| b > 1) {
            return Err(invalid("mask", "entries must be 0 or 1"));
        }
        Ok(Self { d, p, seed, mask })
    }

    /// Observation set containing exactly the listed `(row, col)` pairs.
    pub fn from_pairs(d: usize, p: f64, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut mask = vec![0u8; d * d];
        for &(i, j) in pairs {
            if i >= d || j >= d {
                return Err(Error::IndexOutOfRange { index: i.max(j), d });
            }
            mask[i * d + j] = 1;
        }
        Self::from_mask(d, p, 0, mask)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.d + j] == 1
    }

    pub fn mask_bytes(&self) -> &[u8] {
        &self.mask
    }

    pub fn observed_fraction(&self) -> f64 {
        self.mask.iter().map(|&b| b as usize).sum::<usize>() as f64 / (self.d * self.d) as f64
    }

    /// The indicator as a dense 0/1 matrix.
    pub fn indicator(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.d, self.d, |i, j| self.mask[i * self.d + j] as f64)
    }

    fn check_square(&self, x: &DenseMatrix) -> Result<()> {
        if x.nrows() != self.d || x.ncols() != self.d {
            return Err(Error::Dimension(format!(
                "expected {0}x{0}, got {1}x{2}",
                self.d,
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn to_rle(&self) -> MaskRle {
        let mut runs = Vec::new();
        let mut current = 0u8;
        let mut len = 0u64;
        for &b in &self.mask {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        MaskRle {
            d: self.d,
            p: self.p,
            seed: self.seed,
            runs,
        }
    }

    pub fn from_rle(rle: &MaskRle) -> Result<Self> {
        let mut mask = Vec::with_capacity(rle.d * rle.d);
        let mut bit = 0u8;
        for &len in &rle.runs {
            mask.extend(std::iter::repeat_n(bit, len as usize));
            bit ^= 1;
        }
        Self::from_mask(rle.d, rle.p, rle.seed, mask)
    }
}

/// Run-length-encoded mask. Runs alternate starting with unobserved entries;
/// a leading zero-length run is allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRle {
    pub d: usize,
    pub p: f64,
    pub seed: u64,
    pub runs: Vec<u64>,
}

fn check_rate(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(
            "p",
            format!("sampling rate must lie in (0, 1], got {p}"),
        ));
    }
    Ok(())
}

pub fn sample_mask(d: usize, p: f64, seed: u64) -> Result<ObservationSet> {
    check_rate(p)?;
    if d == 0 {
        return Err(invalid("d", "dimension must be positive"));
    }
    let mut rng = StreamKey::new(seed, "mask")
        .with_u64(d as u64)
        .with_f64(p)
        .rng();
    let mask = (0..d * d).map(|_| u8::from(rng.gen::<f64>() < p)).collect();
    Ok(ObservationSet { d, p, seed, mask })
}

/// Entrywise `X * mask`.
pub fn apply_p_omega(obs: &ObservationSet, x: &DenseMatrix) -> Result<DenseMatrix> {
    obs.check_square(x)?;
    Ok(DenseMatrix::from_fn(obs.d, obs.d, |i, j| {
        if obs.observed(i, j) {
            x[(i, j)]
        } else {
            0.0
        }
    }))
}

/// `(P_Omega(X) + P_Omega(X)^T) / (2p)`.
pub fn apply_r_omega(obs: &ObservationSet, x: &DenseMatrix) -> Result<DenseMatrix> {
    obs.check_square(x)?;
    Ok(r_omega_unchecked(obs, x))
}

pub(crate) fn r_omega_unchecked(obs: &ObservationSet, x: &DenseMatrix) -> DenseMatrix {
    let d = obs.d;
    let scale = 0.5 / obs.p;
    let mut out = DenseMatrix::zeros(d, d);
    for j in 0..d {
        for i in j..d {
            let mut v = 0.0;
            if obs.observed(i, j) {
                v += x[(i, j)];
            }
            if obs.observed(j, i) {
                v += x[(j, i)];
            }
            let v = v * scale;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Leave-one-out operator: row and column `l` (0-based) of `P_Omega` are
/// replaced by `p * X`, so the output's row `l` equals `((X + X^T) / 2)_{l,.}`
/// regardless of the mask.
pub fn apply_r_omega_loo(obs: &ObservationSet, l: usize, x: &DenseMatrix) -> Result<DenseMatrix> {
    obs.check_square(x)?;
    if l >= obs.d {
        return Err(Error::IndexOutOfRange { index: l, d: obs.d });
    }
    Ok(r_omega_loo_unchecked(obs, l, x))
}

pub(crate) fn r_omega_loo_unchecked(
    obs: &ObservationSet,
    l: usize,
    x: &DenseMatrix,
) -> DenseMatrix {
    let mut out = r_omega_unchecked(obs, x);
    for k in 0..obs.d {
        let v = 0.5 * (x[(l, k)] + x[(k, l)]);
        out[(l, k)] = v;
        out[(k, l)] = v;
    }
    out
}

/// The observed-only view of a problem: the mask and `P_Omega(X*)`.
///
/// This is the only handle the optimizer's factor update and the spectral
/// initializer receive, so they cannot read unobserved entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedEntries {
    obs: ObservationSet,
    values: DenseMatrix,
}

impl ObservedEntries {
    /// `values` must vanish outside the mask.
    pub fn new(obs: ObservationSet, values: DenseMatrix) -> Result<Self> {
        obs.check_square(&values)?;
        crate::matops::ensure_finite(&values)?;
        for j in 0..obs.d {
            for i in 0..obs.d {
                if !obs.observed(i, j) && values[(i, j)] != 0.0 {
                    return Err(invalid(
                        "observed_entries",
                        format!("entry ({i}, {j}) is nonzero but unobserved"),
                    ));
                }
            }
        }
        Ok(Self { obs, values })
    }

    /// Masks a full matrix. The full matrix is dropped after projection.
    pub fn from_full(obs: ObservationSet, x: &DenseMatrix) -> Result<Self> {
        let values = apply_p_omega(&obs, x)?;
        Ok(Self { obs, values })
    }

    pub fn obs(&self) -> &ObservationSet {
        &self.obs
    }

    /// `P_Omega(X*)`.
    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    /// `R_Omega(X* - G)` for a symmetric `G`, reading only observed entries.
    pub fn residual_operator(&self, g: &DenseMatrix) -> DenseMatrix {
        let obs = &self.obs;
        let d = obs.d;
        let scale = 0.5 / obs.p;
        let mut out = DenseMatrix::zeros(d, d);
        for j in 0..d {
            for i in j..d {
                let mut v = 0.0;
                if obs.observed(i, j) {
                    v += self.values[(i, j)] - g[(i, j)];
                }
                if obs.observed(j, i) {
                    v += self.values[(j, i)] - g[(j, i)];
                }
                let v = v * scale;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// `||P_Omega(G - X*)||_F^2`.
    pub fn masked_sq_error(&self, g: &DenseMatrix) -> f64 {
        let d = self.obs.d;
        let mut acc = 0.0;
        for j in 0..d {
            for i in 0..d {
                if self.obs.observed(i, j) {
                    let e = g[(i, j)] - self.values[(i, j)];
                    acc += e * e;
                }
            }
        }
        acc
    }
}

fn deviation_matrix(obs: &ObservationSet) -> DenseMatrix {
    let d = obs.d;
    let scale = 0.5 / obs.p;
    DenseMatrix::from_fn(d, d, |i, j| {
        (obs.mask[i * d + j] as f64 + obs.mask[j * d + i] as f64) * scale - 1.0
    })
}

/// `||(Omega + Omega^T) / (2p) - J||`.
pub fn omega_deviation(obs: &ObservationSet) -> f64 {
    sym_op_norm(&deviation_matrix(obs))
}

/// The leave-one-out mask deviation: the full deviation matrix with row and
/// column `l` zeroed.
pub fn omega_deviation_loo(obs: &ObservationSet, l: usize) -> Result<f64> {
    if l >= obs.d {
        return Err(Error::IndexOutOfRange { index: l, d: obs.d });
    }
    let mut m = deviation_matrix(obs);
    m.row_mut(l).fill(0.0);
    m.column_mut(l).fill(0.0);
    Ok(sym_op_norm(&m))
}

/// Empirical `Gamma` in `||(Omega + Omega^T)/2p - J|| <= Gamma sqrt(d/p)`.
pub fn empirical_gamma(obs: &ObservationSet) -> f64 {
    omega_deviation(obs) / (obs.d as f64 / obs.p).sqrt()
}
