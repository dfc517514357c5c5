//! Dense symmetric matrices and the matrix norms used throughout the crate.
//!
//! [`SymmetricMatrix`] carries covariance, correlation and precision matrices
//! and their estimates. Construction rejects non-finite entries and enforces
//! exact symmetry, so downstream code never re-checks either property.
//! [`DenseMatrix`] holds rectangular or non-symmetric intermediates such as
//! lagged cross-correlation matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension accepted for a Kronecker product result.
pub const MAX_KRON_DIM: usize = 4096;

/// Norm selector. Naming follows the usual matrix-analysis conventions:
/// `L1` is the induced (max column sum) norm while the `Elem*` variants are
/// entrywise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Spectral,
    Frobenius,
    L1,
    ElemL1,
    ElemL1Off,
    ElemInf,
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn entrywise_norm(m: &DMatrix<f64>, kind: NormKind) -> f64 {
    match kind {
        NormKind::Frobenius => m.iter().map(|v| v * v).sum::<f64>().sqrt(),
        NormKind::L1 => (0..m.ncols())
            .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::ElemL1 => m.iter().map(|v| v.abs()).sum(),
        NormKind::ElemL1Off => {
            let mut s = 0.0;
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    if i != j {
                        s += m[(i, j)].abs();
                    }
                }
            }
            s
        }
        NormKind::ElemInf => m.iter().fold(0.0, |acc, v| acc.max(v.abs())),
        NormKind::Spectral => unreachable!("spectral norm handled by caller"),
    }
}

/// Dense `p x p` symmetric real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    inner: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Accepts a square matrix that is symmetric up to rounding; the lower
    /// triangle is overwritten from the upper one.
    pub fn from_dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimMismatch {
                expected: "non-empty square matrix".into(),
                actual: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        check_finite(&m)?;
        let p = m.nrows();
        let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        for j in 0..p {
            for i in 0..j {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::Asymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self::from_upper(m))
    }

    /// Row-major entries of a `dim x dim` matrix.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimMismatch {
                expected: format!("{} entries", dim * dim),
                actual: format!("{}", entries.len()),
            });
        }
        Self::from_dense(DMatrix::from_row_slice(dim, dim, entries))
    }

    /// Builds the matrix by evaluating `f(i, j)` for `i <= j`.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimMismatch {
                expected: "dim >= 1".into(),
                actual: "0".into(),
            });
        }
        let mut m = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        check_finite(&m)?;
        Ok(Self { inner: m })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_upper_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    /// Symmetrizes from the upper triangle without validation. Finiteness is
    /// the caller's responsibility.
    pub(crate) fn from_upper(mut m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        for j in 0..p {
            for i in 0..j {
                m[(j, i)] = m[(i, j)];
            }
        }
        Self { inner: m }
    }

    /// Averages `m` with its transpose. Used after products that are
    /// symmetric in exact arithmetic.
    pub(crate) fn from_near_symmetric(m: DMatrix<f64>) -> Result<Self> {
        check_finite(&m)?;
        let avg = (&m + m.transpose()) * 0.5;
        Ok(Self::from_upper(avg))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.inner[(i, i)]).collect()
    }

    /// Applies `f(i, j, value)` to the upper triangle and mirrors it.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Result<Self> {
        Self::from_upper_fn(self.dim(), |i, j| f(i, j, self.inner[(i, j)]))
    }

    pub fn add_identity(&self, eps: f64) -> Result<Self> {
        self.map_entries(|i, j, v| if i == j { v + eps } else { v })
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map_entries(|_, _, v| c * v)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self::from_upper(&self.inner - &other.inner))
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    /// Product `self * other`, generally not symmetric.
    pub fn mul(&self, other: &Self) -> Result<DenseMatrix> {
        self.check_same_dim(other)?;
        Ok(DenseMatrix {
            inner: &self.inner * &other.inner,
        })
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                expected: format!("{}x{}", self.dim(), self.dim()),
                actual: format!("{}x{}", other.dim(), other.dim()),
            });
        }
        Ok(())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.inner.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Spectral => self
                .eigenvalues()
                .iter()
                .fold(0.0, |acc, v| acc.max(v.abs())),
            _ => entrywise_norm(&self.inner, kind),
        }
    }

    /// Inverse via the symmetric eigendecomposition. Fails when
    /// `min |eig| <= 1e-12 * max |eig|`.
    pub fn inverse(&self) -> Result<Self> {
        let eig = SymmetricEigen::new(self.inner.clone());
        let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let min_abs = eig
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if !(min_abs > 1e-12 * max_abs) {
            return Err(Error::SingularMatrix {
                min_abs_eig: min_abs,
                max_abs_eig: max_abs,
            });
        }
        let q = &eig.eigenvectors;
        let mut scaled = q.clone();
        for (j, lam) in eig.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(1.0 / lam);
        }
        Self::from_near_symmetric(scaled * q.transpose())
    }

    /// `log det` via Cholesky; `None` when the matrix is not positive definite.
    pub fn log_det_pd(&self) -> Option<f64> {
        let chol = self.inner.clone().cholesky()?;
        let l = chol.l_dirty();
        Some(2.0 * (0..self.dim()).map(|i| l[(i, i)].ln()).sum::<f64>())
    }

    /// Lower Cholesky factor; `None` when not positive definite.
    pub fn cholesky_lower(&self) -> Option<DMatrix<f64>> {
        self.inner.clone().cholesky().map(|c| c.l())
    }

    /// Rows of the matrix, for serialization.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.inner.row(i).iter().copied().collect())
            .collect()
    }
}

/// Kronecker product `a ⊗ b`. Entry `((i1, i2), (j1, j2))` with flattened
/// index `i1 * dim(b) + i2` equals `a[i1, j1] * b[i2, j2]`; for `R ⊗ R` this
/// is the column-stacking vec order where pair `(i, j)` maps to `i + j p`.
pub fn kron(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let (pa, pb) = (a.dim(), b.dim());
    let dim = pa
        .checked_mul(pb)
        .filter(|d| *d <= MAX_KRON_DIM)
        .ok_or_else(|| Error::TooLarge(format!("kron result {pa}*{pb} exceeds {MAX_KRON_DIM}")))?;
    let mut m = DMatrix::zeros(dim, dim);
    for i1 in 0..pa {
        for j1 in 0..pa {
            let av = a.get(i1, j1);
            if av == 0.0 {
                continue;
            }
            for i2 in 0..pb {
                for j2 in 0..pb {
                    m[(i1 * pb + i2, j1 * pb + j2)] = av * b.get(i2, j2);
                }
            }
        }
    }
    Ok(SymmetricMatrix::from_upper(m))
}

/// Rectangular dense matrix with finite entries, stored column-major by
/// nalgebra; constructors take row-major input.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::DimMismatch {
                expected: format!("{rows}x{cols} non-empty"),
                actual: format!("{} entries", entries.len()),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        check_finite(&m)?;
        Ok(Self { inner: m })
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Spectral => self
                .inner
                .singular_values()
                .iter()
                .fold(0.0, |acc, v| acc.max(*v)),
            _ => entrywise_norm(&self.inner, kind),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| self.inner.row(i).iter().copied().collect())
            .collect()
    }
}

/// Norm of either matrix type.
pub trait MatrixNorm {
    fn matrix_norm(&self, kind: NormKind) -> f64;
}

impl MatrixNorm for SymmetricMatrix {
    fn matrix_norm(&self, kind: NormKind) -> f64 {
        self.norm(kind)
    }
}

impl MatrixNorm for DenseMatrix {
    fn matrix_norm(&self, kind: NormKind) -> f64 {
        self.norm(kind)
    }
}

pub fn matrix_norm<M: MatrixNorm>(m: &M, kind: NormKind) -> f64 {
    m.matrix_norm(kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(dim: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vals = vec![0.0; dim * dim];
        for v in vals.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        SymmetricMatrix::from_upper_fn(dim, |i, j| vals[i * dim + j]).unwrap()
    }

    /// Power iteration on M^2 gives the dominant |eigenvalue|^2.
    fn power_iteration_spectral(m: &SymmetricMatrix) -> f64 {
        let a = m.as_matrix();
        let a2 = a * a;
        let mut v = nalgebra::DVector::from_element(m.dim(), 1.0);
        v[0] = 0.37;
        let mut lam = 0.0;
        for _ in 0..20000 {
            let w = &a2 * &v;
            let nrm = w.norm();
            let next = nrm / v.norm();
            v = w / nrm;
            if (next - lam).abs() < 1e-15 * next.max(1.0) {
                lam = next;
                break;
            }
            lam = next;
        }
        lam.sqrt()
    }

    #[test]
    fn diagonal_spectral_norm() {
        let m = SymmetricMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
        assert!((m.norm(NormKind::Spectral) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn off_diagonal_l1() {
        let m = SymmetricMatrix::from_row_major(2, &[1.0, -2.0, -2.0, 1.0]).unwrap();
        assert_eq!(m.norm(NormKind::ElemL1Off), 4.0);
        assert_eq!(m.norm(NormKind::ElemL1), 6.0);
        assert_eq!(m.norm(NormKind::ElemInf), 2.0);
        assert_eq!(m.norm(NormKind::L1), 3.0);
        assert!((m.norm(NormKind::Frobenius) - 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn spectral_matches_power_iteration() {
        for seed in 0..5 {
            let m = random_sym(5, seed);
            let oracle = power_iteration_spectral(&m);
            assert!(
                (m.norm(NormKind::Spectral) - oracle).abs() < 1e-10,
                "seed {seed}: {} vs {oracle}",
                m.norm(NormKind::Spectral)
            );
        }
    }

    #[test]
    fn dense_spectral_is_top_singular_value() {
        let d = DenseMatrix::from_row_major(2, 3, &[3.0, 0.0, 0.0, 0.0, -4.0, 0.0]).unwrap();
        assert!((d.norm(NormKind::Spectral) - 4.0).abs() < 1e-12);
        assert_eq!(d.norm(NormKind::ElemL1Off), 0.0);
        assert_eq!(d.norm(NormKind::L1), 4.0);
    }

    #[test]
    fn rejects_non_finite_and_asymmetric() {
        assert!(matches!(
            SymmetricMatrix::from_row_major(2, &[1.0, f64::NAN, f64::NAN, 1.0]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            SymmetricMatrix::from_row_major(2, &[1.0, 0.5, 0.4, 1.0]),
            Err(Error::Asymmetric { .. })
        ));
        assert!(DenseMatrix::from_row_major(1, 1, &[f64::INFINITY]).is_err());
    }

    #[test]
    fn kron_identity_and_rho() {
        let i2 = SymmetricMatrix::identity(2);
        assert_eq!(kron(&i2, &i2).unwrap(), SymmetricMatrix::identity(4));
        let rho = 0.3;
        let r = SymmetricMatrix::from_row_major(2, &[1.0, rho, rho, 1.0]).unwrap();
        let k = kron(&r, &r).unwrap();
        // pair (1,1) -> index 0, pair (2,2) -> index 3
        assert!((k.get(0, 3) - rho * rho).abs() < 1e-15);
        assert!((k.get(1, 2) - rho * rho).abs() < 1e-15);
        assert!((k.get(0, 1) - rho).abs() < 1e-15);
    }

    #[test]
    fn kron_matches_nested_loop_oracle() {
        let a = random_sym(3, 11);
        let b = random_sym(3, 12);
        let k = kron(&a, &b).unwrap();
        for r in 0..9 {
            for c in 0..9 {
                let expected = a.get(r / 3, c / 3) * b.get(r % 3, c % 3);
                assert_eq!(k.get(r, c), expected);
            }
        }
    }

    #[test]
    fn kron_mixed_product_property() {
        for (dim, seed) in [(2usize, 1u64), (3, 2)] {
            let a = random_sym(dim, seed);
            let b = random_sym(dim, seed + 10);
            let c = random_sym(dim, seed + 20);
            let d = random_sym(dim, seed + 30);
            let lhs = kron(&a, &b).unwrap().as_matrix() * kron(&c, &d).unwrap().as_matrix();
            let ac = a.as_matrix() * c.as_matrix();
            let bd = b.as_matrix() * d.as_matrix();
            let rhs = ac.kronecker(&bd);
            assert!((lhs - rhs).amax() < 1e-10);
        }
    }

    #[test]
    fn kron_size_guard() {
        let big = SymmetricMatrix::identity(70);
        assert!(matches!(kron(&big, &big), Err(Error::TooLarge(_))));
    }

    #[test]
    fn inverse_simple_cases() {
        let i = SymmetricMatrix::identity(3);
        assert!((i.inverse().unwrap().as_matrix() - i.as_matrix()).amax() < 1e-15);
        let d = SymmetricMatrix::from_diagonal(&[2.0, 4.0]).unwrap();
        let inv = d.inverse().unwrap();
        assert!((inv.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((inv.get(1, 1) - 0.25).abs() < 1e-15);
        assert_eq!(inv.get(0, 1), 0.0);
    }

    #[test]
    fn inverse_of_ar1_covariance_is_tridiagonal() {
        let s = SymmetricMatrix::from_upper_fn(4, |i, j| 0.6f64.powi((j - i) as i32)).unwrap();
        let inv = s.inverse().unwrap();
        let prod = s.as_matrix() * inv.as_matrix();
        assert!((prod - DMatrix::<f64>::identity(4, 4)).amax() < 1e-8);
        for i in 0..4usize {
            for j in 0..4usize {
                if i.abs_diff(j) >= 2 {
                    assert!(inv.get(i, j).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn inverse_rejects_singular() {
        let s = SymmetricMatrix::from_row_major(2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(s.inverse(), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let s = SymmetricMatrix::from_upper_fn(4, |i, j| 0.5f64.powi((j - i) as i32)).unwrap();
        let ld: f64 = s.eigenvalues().iter().map(|v| v.ln()).sum();
        assert!((s.log_det_pd().unwrap() - ld).abs() < 1e-12);
        let indefinite = SymmetricMatrix::from_row_major(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(indefinite.log_det_pd().is_none());
    }

    proptest! {
        #[test]
        fn norm_inequalities(vals in proptest::collection::vec(-5.0f64..5.0, 16)) {
            let m = SymmetricMatrix::from_upper_fn(4, |i, j| vals[i * 4 + j]).unwrap();
            let spec = m.norm(NormKind::Spectral);
            let l1 = m.norm(NormKind::L1);
            prop_assert!(spec <= l1 + 1e-10);
            let fro = m.norm(NormKind::Frobenius);
            prop_assert!(fro * fro <= 4.0 * l1 * m.norm(NormKind::ElemInf) + 1e-9);
        }

        #[test]
        fn double_inverse_is_identity(vals in proptest::collection::vec(-0.2f64..0.2, 16)) {
            // diagonally dominant => well conditioned
            let m = SymmetricMatrix::from_upper_fn(4, |i, j| {
                if i == j { 2.0 + vals[i * 4 + j].abs() } else { vals[i * 4 + j] }
            }).unwrap();
            let back = m.inverse().unwrap().inverse().unwrap();
            prop_assert!((back.as_matrix() - m.as_matrix()).amax() < 1e-6);
        }
    }
}
