use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::random::{gaussian_vector, random_spd};

/// `n` random SPD matrices `QΛQᵀ` with eigenvalues uniform on `[1, conditioning]`.
pub fn generate_spd_data(d: usize, n: usize, conditioning: f64, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    if d == 0 || n == 0 {
        return Err(Error::invalid("data dimension and count must be positive"));
    }
    if !(conditioning >= 1.0 && conditioning.is_finite()) {
        return Err(Error::invalid(format!("conditioning must be at least 1, got {conditioning}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| random_spd(d, conditioning, &mut rng)).collect())
}

/// `n` samples of `N(0, true_cov)`, drawn as `L z` with `L` the Cholesky factor.
pub fn generate_gaussian_data(d: usize, n: usize, seed: u64, true_cov: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    if d == 0 || n == 0 {
        return Err(Error::invalid("data dimension and count must be positive"));
    }
    if true_cov.nrows() != d || true_cov.ncols() != d {
        return Err(Error::dims(format!("{d}x{d}"), format!("{}x{}", true_cov.nrows(), true_cov.ncols())));
    }
    let l = nalgebra::Cholesky::new(true_cov.clone())
        .ok_or(Error::NotPositiveDefinite(f64::NAN))?
        .unpack();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| &l * gaussian_vector(d, &mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Point;

    #[test]
    fn unit_conditioning_gives_identities() {
        for a in generate_spd_data(4, 3, 1.0, 7).unwrap() {
            assert!((a - DMatrix::identity(4, 4)).amax() < 1e-13);
        }
    }

    #[test]
    fn generated_matrices_are_valid_points() {
        for a in generate_spd_data(6, 20, 50.0, 8).unwrap() {
            Point::spd(a).unwrap();
        }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(generate_spd_data(3, 4, 5.0, 9).unwrap(), generate_spd_data(3, 4, 5.0, 9).unwrap());
        let cov = DMatrix::identity(3, 3) * 2.0;
        let a = generate_gaussian_data(3, 10, 1, &cov).unwrap();
        assert_eq!(a, generate_gaussian_data(3, 10, 1, &cov).unwrap());
        assert_ne!(a, generate_gaussian_data(3, 10, 2, &cov).unwrap());
    }

    #[test]
    fn invalid_arguments() {
        assert!(generate_spd_data(0, 3, 2.0, 1).is_err());
        assert!(generate_spd_data(3, 3, 0.5, 1).is_err());
        assert!(generate_gaussian_data(3, 3, 1, &DMatrix::identity(2, 2)).is_err());
        assert!(generate_gaussian_data(2, 3, 1, &-DMatrix::identity(2, 2)).is_err());
    }
}
