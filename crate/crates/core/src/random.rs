//! Seeded random matrices used by the data generators and the test oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::spd::sym;

pub fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Column-major fill keeps the draw order fixed.
    DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)))
}

/// Symmetric matrix with i.i.d. standard normal upper triangle.
pub fn random_symmetric<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    sym(&gaussian_matrix(d, d, rng))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(d, d, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}

/// `Q diag(λ) Qᵀ` for the given spectrum and a random rotation.
pub fn with_spectrum<R: Rng + ?Sized>(spectrum: &[f64], rng: &mut R) -> DMatrix<f64> {
    let d = spectrum.len();
    let q = random_orthogonal(d, rng);
    let mut scaled = q.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= spectrum[j];
    }
    sym(&(scaled * q.transpose()))
}

/// SPD matrix with eigenvalues drawn uniformly from `[1, conditioning]`.
pub fn random_spd<R: Rng + ?Sized>(d: usize, conditioning: f64, rng: &mut R) -> DMatrix<f64> {
    let spectrum: Vec<f64> = (0..d)
        .map(|_| {
            if conditioning > 1.0 {
                rng.random_range(1.0..=conditioning)
            } else {
                1.0
            }
        })
        .collect();
    with_spectrum(&spectrum, rng)
}
