//! Symmetric and positive-semidefinite matrices.
//!
//! `SymMatrix` and `PsdMatrix` are the validated currency of the public API.
//! Inside the crate most arithmetic runs on raw `Mat` values through the free
//! helpers at the bottom of this module.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mc;

pub type Mat = DMatrix<f64>;

/// Largest supported dimension for user-facing matrices.
pub const MAX_DIM: usize = 8;

/// Eigenvalue floor used for PSD membership and singularity checks.
pub const PSD_TOL: f64 = 1e-10;

/// A real symmetric matrix. Inputs are symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    pub fn from_matrix(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        if m.nrows() > MAX_DIM {
            return Err(Error::DimensionTooLarge(m.nrows()));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self(sym(&m)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
        }
        Self::from_matrix(Mat::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(Mat::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Mat::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::from_matrix(Mat::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eig(&self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr { dim: self.dim(), rows: self.rows() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        if repr.rows.len() != repr.dim {
            return Err(serde::de::Error::custom(format!(
                "dim {} does not match {} rows",
                repr.dim,
                repr.rows.len()
            )));
        }
        SymMatrix::from_rows(&repr.rows).map_err(serde::de::Error::custom)
    }
}

/// A symmetric matrix whose smallest eigenvalue is at least `-PSD_TOL`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(SymMatrix);

impl PsdMatrix {
    pub fn new(m: SymMatrix) -> Result<Self> {
        let min_eig = m.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::NotPsd { min_eig });
        }
        Ok(Self(m))
    }

    pub fn from_matrix(m: Mat) -> Result<Self> {
        Self::new(SymMatrix::from_matrix(m)?)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SymMatrix::from_rows(rows)?)
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(d)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(SymMatrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(SymMatrix::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn as_matrix(&self) -> &Mat {
        self.0.as_matrix()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.min_eigenvalue()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > PSD_TOL
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c < 0.0 {
            return Err(Error::InvalidInput("negative scale for a PSD matrix".into()));
        }
        Self::from_matrix(self.as_matrix() * c)
    }

    /// Natural log-determinant. Fails with `SingularMatrix` when the matrix is
    /// not numerically positive definite.
    pub fn logdet(&self) -> Result<f64> {
        let min_eig = self.min_eigenvalue();
        if min_eig <= PSD_TOL {
            return Err(Error::SingularMatrix { min_eig });
        }
        spd_logdet(self.as_matrix())
    }

    pub fn inverse(&self) -> Result<Self> {
        let min_eig = self.min_eigenvalue();
        if min_eig <= PSD_TOL {
            return Err(Error::SingularMatrix { min_eig });
        }
        Ok(Self(SymMatrix(sym(&spd_inverse(self.as_matrix())?))))
    }

    /// Symmetric square root through the eigendecomposition.
    pub fn sqrt_factor(&self) -> PsdMatrix {
        Self(SymMatrix(psd_sqrt(self.as_matrix())))
    }

    /// `n` draws from `N(0, self)`, one per row.
    pub fn sample_gaussian(&self, n: usize, seed: u64) -> Mat {
        let p = self.dim();
        let root = psd_sqrt(self.as_matrix());
        let mut out = Mat::zeros(n, p);
        let mut z = vec![0.0; p];
        for (chunk, start) in (0..n).step_by(mc::CHUNK).enumerate() {
            let mut rng = mc::chunk_rng(seed, chunk as u64);
            for i in start..(start + mc::CHUNK).min(n) {
                for zj in z.iter_mut() {
                    *zj = StandardNormal.sample(&mut rng);
                }
                for a in 0..p {
                    out[(i, a)] = (0..p).map(|b| root[(a, b)] * z[b]).sum();
                }
            }
        }
        out
    }
}

impl Serialize for PsdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PsdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PsdMatrix::new(SymMatrix::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Loewner comparison of two symmetric matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PsdOrder {
    Equal,
    Leq,
    Geq,
    Incomparable,
}

impl PsdOrder {
    pub fn is_leq(self) -> bool {
        matches!(self, PsdOrder::Equal | PsdOrder::Leq)
    }

    pub fn is_geq(self) -> bool {
        matches!(self, PsdOrder::Equal | PsdOrder::Geq)
    }
}

/// Compares `a` and `b` in the Loewner order with eigenvalue tolerance `tol`.
pub fn psd_order(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<PsdOrder> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let d = b.as_matrix() - a.as_matrix();
    let leq = min_eig(&d) >= -tol;
    let geq = min_eig(&(-d)) >= -tol;
    Ok(match (leq, geq) {
        (true, true) => PsdOrder::Equal,
        (true, false) => PsdOrder::Leq,
        (false, true) => PsdOrder::Geq,
        (false, false) => PsdOrder::Incomparable,
    })
}

/// Nearest PSD matrix in Frobenius norm.
pub fn project_psd(a: &SymMatrix) -> PsdMatrix {
    PsdMatrix(SymMatrix(psd_part(a.as_matrix())))
}

pub(crate) fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub(crate) fn eigen(m: &Mat) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(sym(m))
}

pub(crate) fn min_eig(m: &Mat) -> f64 {
    eigen(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn max_eig(m: &Mat) -> f64 {
    eigen(m).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn spectral_map(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let e = eigen(m);
    let d = e.eigenvalues.map(f);
    sym(&(&e.eigenvectors * Mat::from_diagonal(&d) * e.eigenvectors.transpose()))
}

pub(crate) fn psd_part(m: &Mat) -> Mat {
    spectral_map(m, |x| x.max(0.0))
}

pub(crate) fn psd_sqrt(m: &Mat) -> Mat {
    spectral_map(m, |x| x.max(0.0).sqrt())
}

pub(crate) fn cholesky_lower(m: &Mat) -> Result<Mat> {
    nalgebra::Cholesky::new(sym(m))
        .map(|c| c.l())
        .ok_or_else(|| Error::SingularMatrix { min_eig: min_eig(m) })
}

pub(crate) fn spd_logdet(m: &Mat) -> Result<f64> {
    let l = cholesky_lower(m)?;
    Ok(2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

pub(crate) fn spd_inverse(m: &Mat) -> Result<Mat> {
    let c = nalgebra::Cholesky::new(sym(m)).ok_or_else(|| Error::SingularMatrix { min_eig: min_eig(m) })?;
    Ok(sym(&c.inverse()))
}

/// Entropy of `N(0, cov)` in nats.
pub(crate) fn gaussian_entropy(cov: &Mat) -> Result<f64> {
    let p = cov.nrows() as f64;
    Ok(0.5 * (spd_logdet(cov)? + p * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()))
}

/// `a ⪯ b` up to `tol · max(1, ‖b − a‖)`.
pub(crate) fn is_leq(a: &Mat, b: &Mat, tol: f64) -> bool {
    let d = b - a;
    min_eig(&d) >= -tol * d.norm().max(1.0)
}

pub(crate) fn frob(m: &Mat) -> f64 {
    m.norm()
}

pub(crate) fn trace_prod(a: &Mat, b: &Mat) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64) -> SymMatrix {
        SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap()
    }

    #[test]
    fn symmetrizes_on_ingest() {
        let s = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(s.as_matrix()[(0, 1)], 1.0);
        assert_eq!(s.as_matrix()[(1, 0)], 1.0);
    }

    #[test]
    fn order_cases() {
        let a = m2(1.0, 0.0, 1.0);
        let b = m2(2.0, 0.0, 2.0);
        assert_eq!(psd_order(&a, &a, 1e-12).unwrap(), PsdOrder::Equal);
        assert!(psd_order(&a, &a, 1e-12).unwrap().is_leq());
        assert_eq!(psd_order(&a, &b, 1e-12).unwrap(), PsdOrder::Leq);
        assert_eq!(psd_order(&b, &a, 1e-12).unwrap(), PsdOrder::Geq);
        let c = m2(2.0, 0.0, 0.5);
        assert_eq!(psd_order(&a, &c, 1e-12).unwrap(), PsdOrder::Incomparable);
    }

    #[test]
    fn logdet_identity_and_singular() {
        assert_eq!(PsdMatrix::identity(3).logdet().unwrap(), 0.0);
        let z = PsdMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(z.logdet(), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn rejects_indefinite_and_oversized() {
        assert!(matches!(PsdMatrix::from_diagonal(&[1.0, -1.0]), Err(Error::NotPsd { .. })));
        assert!(matches!(SymMatrix::from_matrix(Mat::identity(9, 9)), Err(Error::DimensionTooLarge(9))));
    }

    #[test]
    fn projection_clamps_negative_eigenvalues() {
        let p = project_psd(&SymMatrix::from_diagonal(&[-1.0, 2.0]).unwrap());
        assert_eq!(p.as_matrix(), &Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 2.0])));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let s = m2(0.1 + 0.2, 1.0 / 3.0, std::f64::consts::PI);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.starts_with("{\"dim\":2,\"rows\":"));
        let back: SymMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn json_rejects_bad_dim() {
        let r: std::result::Result<SymMatrix, _> = serde_json::from_str(r#"{"dim":3,"rows":[[1,0],[0,1]]}"#);
        assert!(r.is_err());
    }

    #[test]
    fn sample_covariance_close() {
        let cov = PsdMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let x = cov.sample_gaussian(200_000, 7);
        let emp = x.transpose() * &x / 200_000.0;
        assert!((emp - cov.as_matrix()).abs().max() < 0.03);
        assert_eq!(x, cov.sample_gaussian(200_000, 7));
    }
}
