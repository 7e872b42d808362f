use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularity constants of a bilevel problem.
///
/// `mu` is the strong-convexity modulus of the lower objective, `l_g1` and
/// `l_g2` bound its gradient and Hessian Lipschitz constants, `l_f0` and
/// `l_f1` bound the upper gradient and its Lipschitz constant, and `sigma2`
/// bounds the variance of stochastic oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessMeta {
    pub mu: f64,
    pub l_f0: f64,
    pub l_f1: f64,
    pub l_g1: f64,
    pub l_g2: f64,
    #[serde(default)]
    pub sigma2: f64,
}

impl SmoothnessMeta {
    pub fn new(mu: f64, l_f0: f64, l_f1: f64, l_g1: f64, l_g2: f64, sigma2: f64) -> Result<Self> {
        let meta = SmoothnessMeta {
            mu,
            l_f0,
            l_f1,
            l_g1,
            l_g2,
            sigma2,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.mu, self.l_f0, self.l_f1, self.l_g1, self.l_g2, self.sigma2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("smoothness constants"));
        }
        if self.mu <= 0.0 {
            return Err(Error::invalid(format!("mu must be positive, got {}", self.mu)));
        }
        if all[1..].iter().any(|v| *v < 0.0) {
            return Err(Error::invalid("smoothness constants must be nonnegative"));
        }
        if self.l_g1 < self.mu {
            return Err(Error::invalid(format!(
                "l_g1 = {} is below mu = {}, so kappa < 1",
                self.l_g1, self.mu
            )));
        }
        Ok(())
    }

    /// `κ = ℓ_{g,1} / μ`.
    pub fn kappa(&self) -> f64 {
        self.l_g1 / self.mu
    }

    /// Default Neumann scale `1 / ℓ_{g,1}`.
    pub fn neumann_scale(&self) -> f64 {
        1.0 / self.l_g1
    }

    /// Lipschitz constant of the hypergradient:
    /// `ℓ_{f,1}√(1+κ²) + ℓ_{g,2}ℓ_{f,0}/μ + ℓ_{g,1}(ℓ_{f,0}ℓ_{g,2}√(1+κ²)/μ² + ℓ_{f,1}/μ)`.
    pub fn lipschitz_hypergradient(&self) -> f64 {
        let k = (1.0 + self.kappa().powi(2)).sqrt();
        let mu = self.mu;
        self.l_f1 * k
            + self.l_g2 * self.l_f0 / mu
            + self.l_g1 * (self.l_f0 * self.l_g2 * k / (mu * mu) + self.l_f1 / mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_and_validation() {
        let m = SmoothnessMeta::new(0.5, 1.0, 1.0, 5.0, 0.0, 0.0).unwrap();
        assert_eq!(m.kappa(), 10.0);
        assert_eq!(m.neumann_scale(), 0.2);
        assert!(SmoothnessMeta::new(0.0, 1.0, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(SmoothnessMeta::new(2.0, 1.0, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(SmoothnessMeta::new(1.0, f64::NAN, 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn lipschitz_constant_for_quadratic_upper_and_linear_coupling() {
        // l_g2 = 0 leaves ℓ_{f,1}(√(1+κ²) + κ).
        let m = SmoothnessMeta::new(1.0, 3.0, 2.0, 4.0, 0.0, 0.0).unwrap();
        let want = 2.0 * (17f64.sqrt() + 4.0);
        assert!((m.lipschitz_hypergradient() - want).abs() < 1e-12);
    }
}
