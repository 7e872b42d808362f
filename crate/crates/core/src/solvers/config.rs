use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergrad::{EstimatorConfig, SmoothnessMeta};

/// How the deterministic solver estimates the hypergradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypergradMethod {
    /// Conjugate gradient warm-started from the transported previous solution.
    #[default]
    Cg,
    /// Full Neumann partial sum of `Q` terms.
    NeumannExpected,
    /// Neumann series with random truncation depth and exact oracles.
    NeumannSampled,
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Outer iterations `K`.
    pub outer_steps: usize,
    /// Inner gradient steps `T` per outer iteration.
    pub inner_steps: usize,
    /// Upper step size `α`.
    pub alpha: f64,
    /// Lower step size `β`.
    pub beta: f64,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Stop once the recorded gradient norm falls to this value.
    #[serde(default)]
    pub grad_tol: Option<f64>,
    #[serde(default)]
    pub hypergrad: HypergradMethod,
}

impl SolverConfig {
    /// Step sizes and iteration counts from the problem constants:
    /// `β = 1/ℓ_{g,1}`, `α = 1/(8 L_Φ)`, `T = ⌈κ⌉`, `N`, `Q`, `η` per [`EstimatorConfig::for_meta`].
    pub fn for_meta(meta: &SmoothnessMeta, outer_steps: usize) -> Self {
        SolverConfig {
            outer_steps,
            inner_steps: meta.kappa().ceil() as usize,
            alpha: 1.0 / (8.0 * meta.lipschitz_hypergradient()),
            beta: 1.0 / meta.l_g1,
            estimator: EstimatorConfig::for_meta(meta),
            seed: 0,
            record_every: 1,
            grad_tol: None,
            hypergrad: HypergradMethod::Cg,
        }
    }

    /// Rejects invalid settings and returns warnings for legal but suspicious ones.
    pub fn validate(&self, meta: Option<&SmoothnessMeta>) -> Result<Vec<String>> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be at least 1"));
        }
        if let Some(tol) = self.grad_tol {
            if !(tol >= 0.0) {
                return Err(Error::invalid(format!("grad_tol must be nonnegative, got {tol}")));
            }
        }
        self.estimator.validate(meta)?;
        let mut warnings = Vec::new();
        if let Some(m) = meta {
            if self.beta > 1.0 / m.l_g1 {
                warnings.push(format!("beta = {} exceeds 1/l_g1 = {}", self.beta, 1.0 / m.l_g1));
            }
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SolverConfig {
        let meta = SmoothnessMeta::new(1.0, 1.0, 1.0, 4.0, 0.0, 0.0).unwrap();
        SolverConfig::for_meta(&meta, 10)
    }

    #[test]
    fn defaults_follow_the_constants() {
        let cfg = base();
        assert_eq!(cfg.beta, 0.25);
        assert_eq!(cfg.inner_steps, 4);
        assert_eq!(cfg.estimator.neumann_scale, 0.25);
        assert!(cfg.validate(None).unwrap().is_empty());
    }

    #[test]
    fn invalid_and_suspicious_settings() {
        let meta = SmoothnessMeta::new(1.0, 1.0, 1.0, 4.0, 0.0, 0.0).unwrap();
        let mut cfg = base();
        cfg.alpha = 0.0;
        assert!(cfg.validate(None).is_err());
        let mut cfg = base();
        cfg.beta = 1.0;
        assert_eq!(cfg.validate(Some(&meta)).unwrap().len(), 1);
        let mut cfg = base();
        cfg.estimator.neumann_scale = 1.0;
        assert!(cfg.validate(Some(&meta)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = base();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: SolverConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
