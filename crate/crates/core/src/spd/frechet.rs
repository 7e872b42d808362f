//! Fréchet derivative of the matrix logarithm.
//!
//! The default route is the Daleckii–Krein formula: with `Y = Q diag(λ) Qᵀ`,
//! `D log(Y)[E] = Q (K ∘ QᵀEQ) Qᵀ` where `K` holds the first divided
//! differences of `ln` on the spectrum. The block route reads the top-right
//! block of `log([[Y, E], [0, Y]])`, computed with a general (non-symmetric)
//! matrix logarithm, and serves as an independent cross-check.

use nalgebra::DMatrix;

use super::eigen::{check_square, check_symmetric, eigen_pd, sym, SymEigen, SYMMETRY_TOL};
use crate::error::{Error, Result};

/// Relative eigenvalue gap below which the confluent limit is used.
const CONFLUENT_GAP: f64 = 1e-8;

/// Divided differences `K_ij = (ln λ_i − ln λ_j) / (λ_i − λ_j)`, `K_ii = 1/λ_i`.
pub fn log_divided_differences(values: &[f64]) -> DMatrix<f64> {
    let n = values.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (values[i], values[j]);
        if i == j {
            1.0 / a
        } else if (a - b).abs() < CONFLUENT_GAP * a.max(b) {
            2.0 / (a + b)
        } else {
            // ln(a/b) = ln1p((a − b)/b) avoids cancellation for close eigenvalues.
            ((a - b) / b).ln_1p() / (a - b)
        }
    })
}

/// Daleckii–Krein application at a precomputed decomposition. `e` may be any
/// square matrix; the map is linear and self-adjoint in the Frobenius product.
pub fn frechet_log_eig(eig: &SymEigen, e: &DMatrix<f64>) -> DMatrix<f64> {
    let q = &eig.vectors;
    let k = log_divided_differences(eig.values.as_slice());
    let inner = (q.transpose() * e * q).component_mul(&k);
    q * inner * q.transpose()
}

/// `D log(Y)[E]` for SPD `Y` and symmetric `E`.
pub fn frechet_log(y: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(y, SYMMETRY_TOL)?;
    check_symmetric(e, SYMMETRY_TOL)?;
    if e.nrows() != y.nrows() {
        return Err(Error::dims(y.nrows(), e.nrows()));
    }
    let eig = eigen_pd(y)?;
    Ok(sym(&frechet_log_eig(&eig, e)))
}

/// `D log(Y)[E]` read off the top-right block of `log([[Y, E], [0, Y]])`.
pub fn frechet_log_block(y: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(y, SYMMETRY_TOL)?;
    check_square(e)?;
    let d = y.nrows();
    if e.nrows() != d {
        return Err(Error::dims(d, e.nrows()));
    }
    eigen_pd(y)?;
    let block = upper_block(y, e);
    let log = general_logm(&block)?;
    Ok(log.view((0, d), (d, d)).into_owned())
}

/// `[[Y, E], [0, Y]]`.
pub(crate) fn upper_block(y: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    let d = y.nrows();
    let mut block = DMatrix::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(y);
    block.view_mut((d, d), (d, d)).copy_from(y);
    block.view_mut((0, d), (d, d)).copy_from(e);
    block
}

/// Principal logarithm of a general square matrix whose spectrum lies in the
/// open right half-plane, by inverse scaling and squaring: repeated
/// Denman–Beavers square roots until the argument is near the identity, then
/// the Mercator series.
pub fn general_logm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix logarithm argument"));
    }
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut x = m.clone();
    let mut halvings = 0u32;
    while (&x - &id).norm() > 0.05 {
        x = denman_beavers_sqrt(&x)?;
        halvings += 1;
        if halvings > 64 {
            return Err(Error::invalid("matrix logarithm did not converge"));
        }
    }
    let z = &x - &id;
    let mut power = z.clone();
    let mut series = DMatrix::zeros(n, n);
    for k in 1..=60 {
        let term = &power / k as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        series += sign * &term;
        if term.norm() <= 1e-18 * series.norm().max(f64::MIN_POSITIVE) {
            break;
        }
        power = &power * &z;
    }
    Ok(series * 2f64.powi(halvings as i32))
}

fn denman_beavers_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut y = m.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse().ok_or(Error::Singular)?;
        let z_inv = z.clone().try_inverse().ok_or(Error::Singular)?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            break;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_spd, random_symmetric};
    use crate::spd::spd_log;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn central_difference(y: &DMatrix<f64>, e: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let plus = spd_log(&(y + e * h)).unwrap();
        let minus = spd_log(&(y - e * h)).unwrap();
        (plus - minus) / (2.0 * h)
    }

    #[test]
    fn identity_and_scalar_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = random_symmetric(4, &mut rng);
        let at_id = frechet_log(&DMatrix::identity(4, 4), &e).unwrap();
        assert!((&at_id - &e).amax() < 1e-14);
        let a = 3.5;
        let scaled = frechet_log(&(DMatrix::identity(4, 4) * a), &e).unwrap();
        assert!((scaled - &e / a).amax() < 1e-14);
    }

    #[test]
    fn matches_finite_difference_and_block_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in 1..=5 {
            let y = random_spd(d, 20.0, &mut rng);
            let e = random_symmetric(d, &mut rng);
            let dk = frechet_log(&y, &e).unwrap();
            let fd = central_difference(&y, &e, 1e-5);
            assert!((&dk - &fd).norm() <= 1e-6 * dk.norm(), "FD mismatch at d = {d}");
            let block = frechet_log_block(&y, &e).unwrap();
            assert!((&dk - &block).norm() <= 1e-8 * dk.norm(), "block mismatch at d = {d}");
        }
    }

    #[test]
    fn repeated_eigenvalues_use_confluent_limit() {
        let y = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0 + 1e-12, 5.0]));
        let k = log_divided_differences(y.diagonal().as_slice());
        assert!((k[(0, 1)] - 0.5).abs() < 1e-12);
        assert!(k.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn general_logm_agrees_with_spectral_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_spd(5, 50.0, &mut rng);
        let a = general_logm(&y).unwrap();
        let b = spd_log(&y).unwrap();
        assert!((a - &b).norm() <= 1e-11 * b.norm().max(1.0));
    }

    #[test]
    fn rejects_indefinite_base() {
        let y = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -2.0]));
        let e = DMatrix::identity(2, 2);
        assert!(matches!(frechet_log(&y, &e), Err(Error::NotPositiveDefinite(_))));
    }
}
