//! Planted rank-r PSD ground truths `X* = V* diag(spectrum) V*^T`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matops::{
    ensure_finite, haar_orthonormal, orthonormality_defect, polar_orthonormalize, symmetrize,
    two_inf_norm, DenseMatrix, OrthonormalBasis,
};
use crate::rng::StreamKey;
use crate::tolerance::ORTHONORMAL_ABS;

/// How the planted eigenbasis is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisStyle {
    /// Orthonormalized Gaussian.
    Haar,
    /// Mutually orthogonal `+-1/sqrt(d)` sign patterns; `mu = 1`.
    Flat,
    /// Haar basis blended with `s` standard-basis directions.
    Spiky(usize),
}

impl std::fmt::Display for BasisStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisStyle::Haar => write!(f, "haar"),
            BasisStyle::Flat => write!(f, "flat"),
            BasisStyle::Spiky(s) => write!(f, "spiky({s})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub d: usize,
    pub r: usize,
    pub basis: OrthonormalBasis,
    /// Descending, strictly positive.
    pub spectrum: Vec<f64>,
    pub mu: f64,
    pub kappa: f64,
    pub seed: u64,
    pub style: BasisStyle,
}

impl GroundTruth {
    /// Assembles a ground truth from an explicit basis and spectrum.
    pub fn from_parts(
        basis: OrthonormalBasis,
        spectrum: Vec<f64>,
        seed: u64,
        style: BasisStyle,
    ) -> Result<Self> {
        let (d, r) = (basis.dim(), basis.rank());
        if spectrum.len() != r {
            return Err(Error::Dimension(format!(
                "spectrum has {} values for rank {r}",
                spectrum.len()
            )));
        }
        if spectrum.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(invalid("spectrum", "values must be finite and positive"));
        }
        if spectrum.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("spectrum", "values must be nonincreasing"));
        }
        let mu = measure_incoherence(&basis)?;
        let kappa = spectrum[0] / spectrum[r - 1];
        Ok(Self {
            d,
            r,
            basis,
            spectrum,
            mu,
            kappa,
            seed,
            style,
        })
    }

    pub fn sigma1(&self) -> f64 {
        self.spectrum[0]
    }

    pub fn sigma_r(&self) -> f64 {
        self.spectrum[self.r - 1]
    }

    /// `U* = V* diag(spectrum)^{1/2}`.
    pub fn factor(&self) -> DenseMatrix {
        let mut u = self.basis.matrix().clone();
        for (j, s) in self.spectrum.iter().enumerate() {
            u.column_mut(j).scale_mut(s.sqrt());
        }
        u
    }

    /// `sqrt(mu r / d)`, which equals `||V*||_{2,inf}`.
    pub fn incoherence_scale(&self) -> f64 {
        (self.mu * self.r as f64 / self.d as f64).sqrt()
    }

    /// Set when `d < 9 mu r`, outside the regime the convergence analysis
    /// assumes. The run still proceeds.
    pub fn regime_warning(&self) -> Option<String> {
        let need = 9.0 * self.mu * self.r as f64;
        if (self.d as f64) < need {
            Some(format!(
                "d = {} is below 9*mu*r = {need:.1}; incoherence-based bounds may not apply",
                self.d
            ))
        } else {
            None
        }
    }

    pub fn to_record(&self) -> GroundTruthRecord {
        GroundTruthRecord {
            d: self.d,
            r: self.r,
            spectrum: self.spectrum.clone(),
            mu: self.mu,
            kappa: self.kappa,
            basis: row_major(self.basis.matrix()),
            seed: self.seed,
            style: self.style,
        }
    }

    pub fn from_record(rec: &GroundTruthRecord) -> Result<Self> {
        if rec.basis.len() != rec.d * rec.r {
            return Err(Error::Dimension(format!(
                "basis has {} entries, expected {}",
                rec.basis.len(),
                rec.d * rec.r
            )));
        }
        let m = DenseMatrix::from_row_slice(rec.d, rec.r, &rec.basis);
        let basis = OrthonormalBasis::new(m)?;
        Self::from_parts(basis, rec.spectrum.clone(), rec.seed, rec.style)
    }
}

/// JSON form of a [`GroundTruth`]; `basis` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub d: usize,
    pub r: usize,
    pub spectrum: Vec<f64>,
    pub mu: f64,
    pub kappa: f64,
    pub basis: Vec<f64>,
    pub seed: u64,
    pub style: BasisStyle,
}

pub(crate) fn row_major(m: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
    out
}

/// Geometric spectrum from `sigma1` down to `sigma1 / kappa`.
pub fn geometric_spectrum(r: usize, kappa: f64, sigma1: f64) -> Vec<f64> {
    if r == 1 {
        return vec![sigma1];
    }
    let mut s: Vec<f64> = (0..r)
        .map(|i| sigma1 * kappa.powf(-(i as f64) / (r - 1) as f64))
        .collect();
    s[0] = sigma1;
    s[r - 1] = sigma1 / kappa;
    s
}

pub fn generate_ground_truth(
    d: usize,
    r: usize,
    kappa: f64,
    sigma1: f64,
    style: BasisStyle,
    seed: u64,
) -> Result<GroundTruth> {
    if r == 0 || r > d {
        return Err(invalid("r", format!("need 1 <= r <= d, got r={r}, d={d}")));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(invalid("kappa", format!("need kappa >= 1, got {kappa}")));
    }
    if !(sigma1 > 0.0) || !sigma1.is_finite() {
        return Err(invalid("sigma1", format!("need sigma1 > 0, got {sigma1}")));
    }
    let mut rng = StreamKey::new(seed, "groundtruth")
        .with_u64(d as u64)
        .with_u64(r as u64)
        .rng();
    let basis = match style {
        BasisStyle::Haar => haar_orthonormal(&mut rng, d, r),
        BasisStyle::Flat => flat_basis(d, r)?,
        BasisStyle::Spiky(s) => {
            if s == 0 || s > d {
                return Err(invalid("spiky", format!("need 1 <= s <= d, got {s}")));
            }
            let haar = haar_orthonormal(&mut rng, d, r);
            let mut blended = haar.into_inner();
            // spike j lands on coordinate j, cycling through the columns
            for j in 0..s {
                blended[(j, j % r)] += 1.0;
            }
            polar_orthonormalize(&blended)?
        }
    };
    GroundTruth::from_parts(basis, geometric_spectrum(r, kappa, sigma1), seed, style)
}

/// Columns of a Sylvester-Hadamard matrix of order `2^k` (the smallest power
/// of two `>= r` dividing `d`), each entry repeated `d / 2^k` times and scaled
/// by `1/sqrt(d)`.
pub fn flat_basis(d: usize, r: usize) -> Result<OrthonormalBasis> {
    let mut order = 1usize;
    while order < r {
        order *= 2;
    }
    if order > d || !d.is_multiple_of(order) {
        return Err(Error::NoFlatBasis { d, r });
    }
    let block = d / order;
    let scale = 1.0 / (d as f64).sqrt();
    let m = DenseMatrix::from_fn(d, r, |i, j| {
        let row = i / block;
        // Sylvester entry: (-1)^{popcount(row & col)}
        if (row & j).count_ones().is_multiple_of(2) {
            scale
        } else {
            -scale
        }
    });
    OrthonormalBasis::new(m)
}

/// `mu = (d / r) ||V||_{2,inf}^2`.
pub fn measure_incoherence(v: &OrthonormalBasis) -> Result<f64> {
    let m = v.matrix();
    ensure_finite(m)?;
    let deviation = orthonormality_defect(m);
    if deviation > ORTHONORMAL_ABS {
        return Err(Error::NotOrthonormal { deviation });
    }
    let (d, r) = (m.nrows() as f64, m.ncols() as f64);
    let row = two_inf_norm(m);
    Ok(d / r * row * row)
}

/// `V* diag(spectrum) V*^T`, symmetrized.
pub fn materialize(gt: &GroundTruth) -> DenseMatrix {
    let v = gt.basis.matrix();
    let mut scaled = v.clone();
    for (j, s) in gt.spectrum.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    symmetrize(&(scaled * v.transpose()))
}
