//! Dense matrix primitives: specialized norms, polar orthonormalization,
//! subspace projection, Procrustes alignment and magnitude-ranked partial
//! eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance::{Tolerances, ORTHONORMAL_ABS, SYMMETRY_ABS};

pub type DenseMatrix = DMatrix<f64>;

pub fn ensure_nonempty(m: &DenseMatrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Dimension(format!(
            "empty {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn ensure_finite(m: &DenseMatrix) -> Result<()> {
    ensure_nonempty(m)?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn ensure_same_shape(a: &DenseMatrix, b: &DenseMatrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Matrix with orthonormal columns (`V^T V = I_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis(DenseMatrix);

impl OrthonormalBasis {
    pub fn new(m: DenseMatrix) -> Result<Self> {
        Self::with_tolerance(m, ORTHONORMAL_ABS)
    }

    pub fn with_tolerance(m: DenseMatrix, tol: f64) -> Result<Self> {
        ensure_finite(&m)?;
        if m.ncols() > m.nrows() {
            return Err(Error::Dimension(format!(
                "a {}x{} matrix cannot have orthonormal columns",
                m.nrows(),
                m.ncols()
            )));
        }
        let deviation = orthonormality_defect(&m);
        if deviation > tol {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is orthonormal by construction (polar factors, QR).
    pub(crate) fn trusted(m: DenseMatrix) -> Self {
        debug_assert!(orthonormality_defect(&m) <= 1e-8);
        Self(m)
    }

    /// First `k` columns of the identity.
    pub fn standard(d: usize, k: usize) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::Dimension(format!(
                "need 1 <= k <= d, got k={k}, d={d}"
            )));
        }
        Ok(Self(DenseMatrix::identity(d, k)))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn rank(&self) -> usize {
        self.0.ncols()
    }

    /// `V V^T`.
    pub fn projector(&self) -> DenseMatrix {
        &self.0 * self.0.transpose()
    }
}

impl AsRef<DenseMatrix> for OrthonormalBasis {
    fn as_ref(&self) -> &DenseMatrix {
        &self.0
    }
}

pub fn orthonormality_defect(m: &DenseMatrix) -> f64 {
    let gram = m.transpose() * m;
    (gram - DenseMatrix::identity(m.ncols(), m.ncols())).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixNorms {
    pub op: f64,
    pub fro: f64,
    pub two_inf: f64,
    pub max: f64,
}

pub fn matrix_norms(m: &DenseMatrix) -> Result<MatrixNorms> {
    ensure_finite(m)?;
    Ok(MatrixNorms {
        op: op_norm(m),
        fro: m.norm(),
        two_inf: two_inf_norm(m),
        max: max_norm(m),
    })
}

/// Largest singular value.
pub fn op_norm(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    // The Gram matrix of the short side is cheaper and just as accurate for
    // the top singular value.
    let gram = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let top = gram
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v));
    top.max(0.0).sqrt()
}

/// Operator norm of a symmetric matrix: `max |lambda|`.
pub fn sym_op_norm(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// `max_i ||M_{i,.}||`.
pub fn two_inf_norm(m: &DenseMatrix) -> f64 {
    (0..m.nrows()).map(|i| m.row(i).norm()).fold(0.0, f64::max)
}

/// `max_{i,j} |M_{ij}|`.
pub fn max_norm(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// Thin SVD with descending singular values and a deterministic sign: the
/// largest-magnitude entry of every left singular vector is positive.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    ensure_finite(m)?;
    let raw = m.clone().svd(true, true);
    let u = raw.u.expect("requested U");
    let v_t = raw.v_t.expect("requested V^T");
    let k = raw.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        raw.singular_values[b]
            .partial_cmp(&raw.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut uo = DenseMatrix::zeros(u.nrows(), k);
    let mut vo = DenseMatrix::zeros(v_t.ncols(), k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = u.column(src).into_owned();
        let mut vcol = v_t.row(src).transpose();
        if sign_of_largest(ucol.as_slice()) < 0.0 {
            ucol = -ucol;
            vcol = -vcol;
        }
        uo.set_column(dst, &ucol);
        vo.set_column(dst, &vcol);
        s.push(raw.singular_values[src]);
    }
    Ok(Svd {
        u: uo,
        singular_values: s,
        v: vo,
    })
}

fn sign_of_largest(v: &[f64]) -> f64 {
    let mut best = 0.0_f64;
    for &x in v {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// `k`-th largest singular value (1-based); zero when `k` exceeds the rank bound.
pub fn sigma_k(m: &DenseMatrix, k: usize) -> f64 {
    assert!(k >= 1, "sigma_k is 1-based");
    singular_values(m).get(k - 1).copied().unwrap_or(0.0)
}

/// `Z (Z^T Z)^{-1/2}`, computed as `U_Z V_Z^T` from the thin SVD.
pub fn polar_orthonormalize(z: &DenseMatrix) -> Result<OrthonormalBasis> {
    polar_orthonormalize_with(z, &Tolerances::default())
}

pub fn polar_orthonormalize_with(z: &DenseMatrix, tol: &Tolerances) -> Result<OrthonormalBasis> {
    ensure_finite(z)?;
    if z.ncols() > z.nrows() {
        return Err(Error::Dimension(format!(
            "polar factor of a wide {}x{} matrix has no orthonormal columns",
            z.nrows(),
            z.ncols()
        )));
    }
    let dec = svd(z)?;
    let sigma_max = dec.singular_values.first().copied().unwrap_or(0.0);
    let sigma_min = dec.singular_values.last().copied().unwrap_or(0.0);
    if !(sigma_min > tol.rank_rel * sigma_max) || sigma_max == 0.0 {
        return Err(Error::Singular {
            sigma_min,
            sigma_max,
        });
    }
    Ok(OrthonormalBasis::trusted(&dec.u * dec.v.transpose()))
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub onto: DenseMatrix,
    pub complement: DenseMatrix,
}

/// Splits `U` into `V V^T U` and `U - V V^T U`.
pub fn project(v: &OrthonormalBasis, u: &DenseMatrix) -> Result<Projection> {
    if v.dim() != u.nrows() {
        return Err(Error::Dimension(format!(
            "basis has {} rows but U has {}",
            v.dim(),
            u.nrows()
        )));
    }
    let onto = v.matrix() * (v.matrix().transpose() * u);
    let complement = u - &onto;
    Ok(Projection { onto, complement })
}

/// The orthogonal `O` minimizing `||X - Y O||_F`.
pub fn procrustes_rotation(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_same_shape(x, y, "procrustes")?;
    ensure_finite(x)?;
    ensure_finite(y)?;
    let dec = svd(&(y.transpose() * x))?;
    Ok(&dec.u * dec.v.transpose())
}

/// `min_O ||X - Y O||_F` over orthogonal `O`.
pub fn procrustes_dist(x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    let o = procrustes_rotation(x, y)?;
    Ok((x - y * o).norm())
}

#[derive(Debug, Clone)]
pub struct PartialEig {
    pub values: Vec<f64>,
    pub vectors: OrthonormalBasis,
}

/// The `k` eigen-pairs of largest `|lambda|`, i.e. the Frobenius-best rank-`k`
/// approximation of a symmetric matrix. Values are returned in ranking order.
pub fn partial_eig_sym(a: &DenseMatrix, k: usize) -> Result<PartialEig> {
    ranked_eig_sym(a, k, f64::abs)
}

/// The `k` algebraically largest eigenpairs, i.e. the leading part of the
/// best positive semidefinite approximation once negatives are dropped.
pub fn top_eig_sym(a: &DenseMatrix, k: usize) -> Result<PartialEig> {
    ranked_eig_sym(a, k, |v| v)
}

fn ranked_eig_sym(a: &DenseMatrix, k: usize, key: fn(f64) -> f64) -> Result<PartialEig> {
    ensure_finite(a)?;
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::Dimension(format!(
            "{}x{} is not square",
            d,
            a.ncols()
        )));
    }
    if k == 0 || k > d {
        return Err(Error::Dimension(format!("need 1 <= k <= {d}, got {k}")));
    }
    let asym = symmetry_defect(a);
    if asym > SYMMETRY_ABS {
        return Err(Error::NotSymmetric { deviation: asym });
    }
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        key(eig.eigenvalues[j])
            .partial_cmp(&key(eig.eigenvalues[i]))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut vecs = DenseMatrix::zeros(d, k);
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().take(k).enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if sign_of_largest(col.as_slice()) < 0.0 {
            col = -col;
        }
        vecs.set_column(dst, &col);
        values.push(eig.eigenvalues[src]);
    }
    Ok(PartialEig {
        values,
        vectors: OrthonormalBasis::trusted(vecs),
    })
}

pub fn symmetry_defect(a: &DenseMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// `(A + A^T) / 2`, exactly symmetric.
pub fn symmetrize(a: &DenseMatrix) -> DenseMatrix {
    let n = a.nrows();
    let mut out = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Operator norm of `sum_i sign_i F_i F_i^T` without forming the `d x d`
/// matrix. Requires every factor's columns to lie in the column span of `span`.
pub fn low_rank_sym_op_norm(span: &DenseMatrix, terms: &[(&DenseMatrix, f64)]) -> f64 {
    let q = span.clone().qr().q();
    let k = q.ncols();
    let mut core = DenseMatrix::zeros(k, k);
    for (factor, sign) in terms {
        let proj = q.transpose() * *factor;
        core += (&proj * proj.transpose()) * *sign;
    }
    sym_op_norm(&symmetrize(&core))
}

/// Standard Gaussian `rows x cols` matrix.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed `d x k` orthonormal matrix: QR of a Gaussian with the
/// diagonal of `R` made positive.
pub fn haar_orthonormal<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> OrthonormalBasis {
    let g = gaussian(rng, d, k);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j).into_owned();
            q.set_column(j, &col);
        }
    }
    OrthonormalBasis::trusted(q)
}

/// Column vector helper for tests and small constructions.
pub fn column(values: &[f64]) -> DenseMatrix {
    DenseMatrix::from_column_slice(values.len(), 1, values)
}

pub fn diag(values: &[f64]) -> DenseMatrix {
    DenseMatrix::from_diagonal(&DVector::from_row_slice(values))
}

/// Frobenius inner product.
pub fn inner(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.component_mul(b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn m(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix {
        DenseMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn identity_norms() {
        let n = matrix_norms(&DenseMatrix::identity(2, 2)).unwrap();
        assert!((n.op - 1.0).abs() < 1e-14);
        assert!((n.fro - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(n.two_inf, 1.0);
        assert_eq!(n.max, 1.0);
    }

    #[test]
    fn three_four_five_row() {
        let n = matrix_norms(&m(2, 2, &[3.0, 4.0, 0.0, 0.0])).unwrap();
        assert!((n.two_inf - 5.0).abs() < 1e-14);
    }

    #[test]
    fn norm_chain_against_svd_oracle() {
        let mut r = rng(3);
        for _ in 0..20 {
            let a = gaussian(&mut r, 5, 3);
            let n = matrix_norms(&a).unwrap();
            // oracle: nalgebra's own singular values
            let s = a.clone().svd(false, false).singular_values;
            let top = s.iter().cloned().fold(0.0, f64::max);
            assert!((n.op - top).abs() < 1e-12 * top);
            assert!(n.op <= n.fro + 1e-12);
            assert!(n.fro <= 3f64.sqrt() * n.op + 1e-12);
            assert!(n.two_inf <= n.op + 1e-12);
        }
    }

    #[test]
    fn empty_matrix_rejected() {
        let e = DenseMatrix::zeros(0, 3);
        assert!(matches!(matrix_norms(&e), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_finite_rejected() {
        let a = m(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(
            matrix_norms(&a),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn polar_of_orthonormal_is_identity_map() {
        let v = haar_orthonormal(&mut rng(1), 6, 3);
        let p = polar_orthonormalize(v.matrix()).unwrap();
        assert!((p.matrix() - v.matrix()).amax() < 1e-12);
    }

    #[test]
    fn polar_cancels_scaling() {
        let p = polar_orthonormalize(&(DenseMatrix::identity(3, 3) * 2.0)).unwrap();
        assert!((p.matrix() - DenseMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn polar_diagonal_case() {
        let z = m(3, 2, &[3.0, 0.0, 0.0, 0.0, 0.0, 4.0]);
        let p = polar_orthonormalize(&z).unwrap();
        let want = m(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((p.matrix() - want).amax() < 1e-14);
    }

    #[test]
    fn polar_rank_deficient_names_sigma_min() {
        let z = m(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        match polar_orthonormalize(&z) {
            Err(Error::Singular { sigma_min, .. }) => assert!(sigma_min < 1e-10),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn projection_hand_case() {
        let v = OrthonormalBasis::new(column(&[1.0, 0.0])).unwrap();
        let u = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = project(&v, &u).unwrap();
        assert_eq!(p.onto, m(2, 2, &[1.0, 2.0, 0.0, 0.0]));
        assert_eq!(p.complement, m(2, 2, &[0.0, 0.0, 3.0, 4.0]));
    }

    #[test]
    fn projection_of_contained_columns() {
        let mut r = rng(5);
        let v = haar_orthonormal(&mut r, 7, 2);
        let u = v.matrix() * gaussian(&mut r, 2, 4);
        let p = project(&v, &u).unwrap();
        assert!(p.complement.amax() < 1e-12);
    }

    #[test]
    fn projection_dimension_mismatch() {
        let v = OrthonormalBasis::standard(3, 1).unwrap();
        assert!(project(&v, &DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn procrustes_examples() {
        let mut r = rng(9);
        let x = gaussian(&mut r, 6, 3);
        assert!(procrustes_dist(&x, &x).unwrap() < 1e-12);
        let o = haar_orthonormal(&mut r, 3, 3);
        assert!(procrustes_dist(&x, &(&x * o.matrix())).unwrap() < 1e-12);
        let a = m(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let b = m(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((procrustes_dist(&a, &b).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn procrustes_shape_mismatch() {
        assert!(procrustes_dist(&DenseMatrix::zeros(3, 2), &DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn partial_eig_magnitude_ranking() {
        let e = partial_eig_sym(&diag(&[3.0, 1.0, -2.0]), 2).unwrap();
        assert_eq!(e.values, vec![3.0, -2.0]);
    }

    #[test]
    fn top_eig_prefers_positive_values() {
        let e = top_eig_sym(&diag(&[3.0, 1.0, -2.0]), 2).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
    }

    #[test]
    fn partial_eig_rank_one() {
        let v = column(&[1.0, -2.0, 2.0]);
        let a = &v * v.transpose();
        let e = partial_eig_sym(&a, 1).unwrap();
        assert!((e.values[0] - 9.0).abs() < 1e-12);
        let unit = &v / 3.0;
        let got = e.vectors.matrix();
        let aligned = (got - &unit).amax().min((got + &unit).amax());
        assert!(aligned < 1e-12);
    }

    #[test]
    fn partial_eig_rejects_asymmetric() {
        let a = m(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            partial_eig_sym(&a, 1),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn low_rank_op_norm_matches_dense() {
        let mut r = rng(11);
        let a = gaussian(&mut r, 9, 2);
        let b = gaussian(&mut r, 9, 3);
        let dense = &a * a.transpose() - &b * b.transpose();
        let mut span = DenseMatrix::zeros(9, 5);
        span.columns_mut(0, 2).copy_from(&a);
        span.columns_mut(2, 3).copy_from(&b);
        let fast = low_rank_sym_op_norm(&span, &[(&a, 1.0), (&b, -1.0)]);
        assert!((fast - sym_op_norm(&dense)).abs() < 1e-10 * fast);
    }
}
