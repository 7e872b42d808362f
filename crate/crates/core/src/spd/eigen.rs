//! Symmetric eigendecomposition and the spectral matrix functions built on it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted for inputs declared symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Spectral decomposition `S = Q diag(λ) Qᵀ` with eigenvalues sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl SymEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Q diag(f(λ)) Qᵀ`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        sym(&(scaled * self.vectors.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map(|l| l)
    }

    pub(crate) fn require_positive(&self) -> Result<()> {
        let min = self.min_value();
        if min > 0.0 && min.is_finite() {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite(min))
        }
    }
}

/// `(X + Xᵀ) / 2`.
pub fn sym(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

/// Largest entry of `|X − Xᵀ|`.
pub fn asymmetry(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((x[(i, j)] - x[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn check_square(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != x.ncols() {
        return Err(Error::dims(
            format!("square matrix ({0}x{0})", x.nrows()),
            format!("{}x{}", x.nrows(), x.ncols()),
        ));
    }
    Ok(())
}

pub(crate) fn check_finite(x: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Checks that `x` is square, finite and symmetric to `tol` relative to its largest entry.
pub(crate) fn check_symmetric(x: &DMatrix<f64>, tol: f64) -> Result<()> {
    check_square(x)?;
    check_finite(x, "matrix")?;
    let scale = x.amax();
    let asym = asymmetry(x);
    if asym > tol * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix.
pub fn sym_eigen(s: &DMatrix<f64>) -> Result<SymEigen> {
    check_symmetric(s, SYMMETRY_TOL)?;
    eigen_of_sym(&sym(s))
}

/// Eigendecomposition without the symmetry check; the caller symmetrizes.
pub(crate) fn eigen_of_sym(s: &DMatrix<f64>) -> Result<SymEigen> {
    let n = s.nrows();
    if n == 0 {
        return Ok(SymEigen {
            vectors: DMatrix::zeros(0, 0),
            values: DVector::zeros(0),
        });
    }
    let eig = SymmetricEigen::try_new(s.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    Ok(SymEigen { vectors, values })
}

/// Eigendecomposition of a matrix that must be positive definite.
pub(crate) fn eigen_pd(s: &DMatrix<f64>) -> Result<SymEigen> {
    let eig = eigen_of_sym(&sym(s))?;
    eig.require_positive()?;
    Ok(eig)
}

/// Principal square root of an SPD matrix.
pub fn spd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(s)?;
    eig.require_positive()?;
    Ok(eig.map(f64::sqrt))
}

/// Inverse principal square root of an SPD matrix.
pub fn spd_inv_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(s)?;
    eig.require_positive()?;
    Ok(eig.map(|l| 1.0 / l.sqrt()))
}

/// Principal logarithm of an SPD matrix.
pub fn spd_log(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(s)?;
    eig.require_positive()?;
    Ok(eig.map(f64::ln))
}

/// Exponential of a symmetric matrix.
pub fn sym_exp(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(v)?;
    Ok(eig.map(f64::exp))
}

/// Inverse of an SPD matrix via Cholesky, symmetrized.
pub(crate) fn spd_inverse(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(sym(s)).ok_or(Error::NotPositiveDefinite(f64::NAN))?;
    Ok(sym(&chol.inverse()))
}

/// `S^{1/2}` and `S^{-1/2}` from one decomposition.
#[derive(Debug, Clone)]
pub(crate) struct SqrtPair {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

impl SqrtPair {
    pub fn of(s: &DMatrix<f64>) -> Result<Self> {
        let eig = eigen_pd(s)?;
        Ok(SqrtPair {
            sqrt: eig.map(f64::sqrt),
            inv_sqrt: eig.map(|l| 1.0 / l.sqrt()),
        })
    }

    /// `S^{-1/2} X S^{-1/2}`, symmetrized.
    pub fn whiten(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        sym(&(&self.inv_sqrt * x * &self.inv_sqrt))
    }

    /// `S^{1/2} X S^{1/2}`, symmetrized.
    pub fn color(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        sym(&(&self.sqrt * x * &self.sqrt))
    }
}
