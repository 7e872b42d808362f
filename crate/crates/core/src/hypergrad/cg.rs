use super::oracles::LinearOperator;
use crate::error::{Error, Result};
use crate::manifold::{inner, Tangent};

/// Result of [`tangent_cg`].
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Tangent,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Conjugate gradient for `H v = rhs` on the tangent space at `rhs.base()`,
/// with inner products in the Riemannian metric there. Runs at most `steps`
/// iterations from `v0` and stops early once the residual norm is `≤ tol`.
pub fn tangent_cg(
    op: &dyn LinearOperator,
    rhs: &Tangent,
    v0: &Tangent,
    steps: usize,
    tol: f64,
) -> Result<CgOutcome> {
    let y = rhs.base();
    v0.require_base(y)?;
    let mut v = v0.clone();
    let mut r = rhs.sub(&op.apply(&v)?)?;
    let mut rr = inner(y, &r, &r)?;
    let mut p = r.clone();
    let mut iterations = 0;
    while iterations < steps && rr > 0.0 && rr.sqrt() > tol {
        let hp = op.apply(&p)?;
        hp.require_base(y)?;
        let curvature = inner(y, &p, &hp)?;
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(Error::IndefiniteOperator(curvature));
        }
        let a = rr / curvature;
        v = v.axpy(a, &p)?;
        r = r.axpy(-a, &hp)?;
        let rr_next = inner(y, &r, &r)?;
        if !rr_next.is_finite() || !v.payload().is_finite() {
            return Err(Error::NonFinite("conjugate gradient iterate"));
        }
        p = r.axpy(rr_next / rr, &p)?;
        rr = rr_next;
        iterations += 1;
    }
    Ok(CgOutcome {
        solution: v,
        iterations,
        residual_norm: rr.max(0.0).sqrt(),
    })
}

/// Error factor `√κ ((√κ − 1)/(√κ + 1))ᴺ` of `N`-step CG.
pub fn cg_error_bound(kappa: f64, steps: usize) -> f64 {
    let s = kappa.sqrt();
    s * ((s - 1.0) / (s + 1.0)).powi(steps as i32)
}
