use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::cg::tangent_cg;
use super::meta::SmoothnessMeta;
use super::oracles::{BilevelProblem, LinearOperator};
use crate::error::{Error, Result};
use crate::manifold::{inner, norm, random_tangent, tangent_basis, Point, Tangent};

/// Parameters of the hypergradient estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// CG steps `N`.
    pub cg_steps: usize,
    /// Neumann truncation `Q`.
    pub neumann_terms: usize,
    /// Neumann scale `η`.
    pub neumann_scale: f64,
    /// Residual threshold for early CG exit.
    pub cg_tol: f64,
}

impl EstimatorConfig {
    /// `N ≈ √κ`, `Q ≈ κ log(1/ε)` with unit constants, `η = 1/ℓ_{g,1}`.
    pub fn for_meta(meta: &SmoothnessMeta) -> Self {
        let k = meta.kappa();
        EstimatorConfig {
            cg_steps: (k.sqrt().ceil() as usize).max(1) * 2,
            neumann_terms: ((k * 20f64.ln()).ceil() as usize).max(1),
            neumann_scale: meta.neumann_scale(),
            cg_tol: 1e-12,
        }
    }

    pub fn validate(&self, meta: Option<&SmoothnessMeta>) -> Result<()> {
        if self.cg_steps == 0 || self.neumann_terms == 0 {
            return Err(Error::invalid("cg_steps and neumann_terms must be at least 1"));
        }
        if !(self.neumann_scale > 0.0 && self.neumann_scale.is_finite()) {
            return Err(Error::invalid(format!("neumann_scale must be positive, got {}", self.neumann_scale)));
        }
        if !(self.cg_tol >= 0.0) {
            return Err(Error::invalid(format!("cg_tol must be nonnegative, got {}", self.cg_tol)));
        }
        if let Some(m) = meta {
            if self.neumann_scale > m.neumann_scale() * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "neumann_scale {} exceeds 1/l_g1 = {}",
                    self.neumann_scale,
                    m.neumann_scale()
                )));
            }
        }
        Ok(())
    }
}

fn combine(basis: &[Tangent], coef: &DVector<f64>, base: &Point) -> Result<Tangent> {
    let mut out = Tangent::zero(base);
    for (b, c) in basis.iter().zip(coef.iter()) {
        out = out.axpy(*c, b)?;
    }
    Ok(out)
}

/// Solves `H v = rhs` by materializing `H` in a coordinate basis of the
/// tangent space and factorizing it. Intended for small tangent dimensions.
pub fn dense_tangent_solve(op: &dyn LinearOperator, rhs: &Tangent) -> Result<Tangent> {
    let y = rhs.base();
    let basis = tangent_basis(y);
    let n = basis.len();
    let images = basis.iter().map(|b| op.apply(b)).collect::<Result<Vec<_>>>()?;
    let mut gram = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for a in 0..n {
        r[a] = inner(y, &basis[a], rhs)?;
        for (b, hb) in images.iter().enumerate() {
            gram[(a, b)] = inner(y, &basis[a], hb)?;
        }
    }
    if !gram.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("materialized Hessian"));
    }
    let spectrum = crate::spd::eigen_of_sym(&crate::spd::sym(&gram))?;
    let big = spectrum.values.iter().fold(0f64, |m, v| m.max(v.abs()));
    let small = spectrum.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if n > 0 && !(small > 1e-13 * big) {
        return Err(Error::Singular);
    }
    let coef = gram.lu().solve(&r).ok_or(Error::Singular)?;
    combine(&basis, &coef, y)
}

fn assemble<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Point,
    y: &Point,
    grad_x: Tangent,
    v: &Tangent,
) -> Result<Tangent> {
    let cross = problem.cross_apply(x, y, v)?;
    grad_x.sub(&cross)
}

/// `∇_x f − ∇²_{y,x} g[v*]` with `v*` from a dense solve of `H_y g[v] = ∇_y f`.
pub fn exact_hypergradient<P: BilevelProblem + ?Sized>(problem: &P, x: &Point, y: &Point) -> Result<Tangent> {
    let rhs = problem.grad_y_f(x, y)?;
    let h = problem.lower_hessian(x, y)?;
    let v = dense_tangent_solve(h.as_ref(), &rhs)?;
    assemble(problem, x, y, problem.grad_x_f(x, y)?, &v)
}

/// Hypergradient with `v` from `N`-step CG warm-started at `v0`.
/// Returns `(h_Φ, v̂ᴺ)`.
pub fn aid_hypergradient<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Point,
    y: &Point,
    v0: &Tangent,
    cfg: &EstimatorConfig,
) -> Result<(Tangent, Tangent)> {
    let rhs = problem.grad_y_f(x, y)?;
    let h = problem.lower_hessian(x, y)?;
    let v = tangent_cg(h.as_ref(), &rhs, v0, cfg.cg_steps, cfg.cg_tol)?.solution;
    let out = assemble(problem, x, y, problem.grad_x_f(x, y)?, &v)?;
    Ok((out, v))
}

/// Randomized truncated Neumann series `ηQ ∏_{q=1}^{Q′}(I − ηH_q)[rhs]`
/// with `Q′` uniform on `{0, …, Q−1}` and each `H_q` drawn by `sampler`.
/// Factors are applied right to left.
pub fn neumann_inverse_apply(
    sampler: &mut dyn FnMut(&Tangent, &mut dyn RngCore) -> Result<Tangent>,
    rhs: &Tangent,
    eta: f64,
    terms: usize,
    rng: &mut dyn RngCore,
) -> Result<Tangent> {
    if terms == 0 {
        return Err(Error::invalid("neumann_terms must be at least 1"));
    }
    let depth = rng.random_range(0..terms);
    let mut v = rhs.clone();
    for _ in 0..depth {
        let hv = sampler(&v, rng)?;
        v = v.axpy(-eta, &hv)?;
    }
    Ok(v.scale(eta * terms as f64))
}

/// Partial sum `η Σ_{q=0}^{Q−1} (I − ηH)^q [rhs]`, the mean of
/// [`neumann_inverse_apply`] for a deterministic `H`.
pub fn neumann_partial_sum(op: &dyn LinearOperator, rhs: &Tangent, eta: f64, terms: usize) -> Result<Tangent> {
    let mut term = rhs.clone();
    let mut sum = Tangent::zero(rhs.base());
    for q in 0..terms {
        sum = sum.add(&term)?;
        if q + 1 < terms {
            let h = op.apply(&term)?;
            term = term.axpy(-eta, &h)?;
        }
    }
    Ok(sum.scale(eta))
}

/// Single-sample stochastic hypergradient `∇_x F(ξ) − ∇²_{y,x} G(ζ₀)[v_Q]`.
pub fn stochastic_hypergradient<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Point,
    y: &Point,
    cfg: &EstimatorConfig,
    rng: &mut dyn RngCore,
) -> Result<Tangent> {
    let s = problem.stochastic().ok_or(Error::MissingSampler)?;
    let (gx, gy) = s.sample_upper_grads(x, y, rng)?;
    let mut sampler = |v: &Tangent, r: &mut dyn RngCore| s.sample_hvp(x, y, v, r);
    let v = neumann_inverse_apply(&mut sampler, &gy, cfg.neumann_scale, cfg.neumann_terms, rng)?;
    let cross = s.sample_cross(x, y, &v, rng)?;
    gx.sub(&cross)
}

/// The randomized Neumann estimate evaluated with exact oracles: only the
/// truncation depth `Q′` is random. Consumes `rng` exactly like
/// [`stochastic_hypergradient`] with zero-variance samplers.
pub fn sampled_neumann_hypergradient<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Point,
    y: &Point,
    cfg: &EstimatorConfig,
    rng: &mut dyn RngCore,
) -> Result<Tangent> {
    let gx = problem.grad_x_f(x, y)?;
    let gy = problem.grad_y_f(x, y)?;
    let h = problem.lower_hessian(x, y)?;
    let mut sampler = |v: &Tangent, _: &mut dyn RngCore| h.apply(v);
    let v = neumann_inverse_apply(&mut sampler, &gy, cfg.neumann_scale, cfg.neumann_terms, rng)?;
    assemble(problem, x, y, gx, &v)
}

/// Hypergradient with `v` the full Neumann partial sum of `Q` terms.
pub fn deterministic_neumann_hypergradient<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &Point,
    y: &Point,
    cfg: &EstimatorConfig,
) -> Result<Tangent> {
    let gy = problem.grad_y_f(x, y)?;
    let h = problem.lower_hessian(x, y)?;
    let v = neumann_partial_sum(h.as_ref(), &gy, cfg.neumann_scale, cfg.neumann_terms)?;
    assemble(problem, x, y, problem.grad_x_f(x, y)?, &v)
}

/// `ℓ_{f,0} κ (1 − 1/κ)^Q`, the bias of the Neumann hypergradient.
pub fn neumann_bias_bound(meta: &SmoothnessMeta, terms: usize) -> f64 {
    let k = meta.kappa();
    meta.l_f0 * k * (1.0 - 1.0 / k).max(0.0).powi(terms as i32)
}

/// Largest `|⟨η, ∇²_{x,y}g[ξ]⟩_y − ⟨∇²_{y,x}g[η], ξ⟩_x| / (1 + ‖ξ‖‖η‖)` over
/// random Gaussian pairs `(ξ, η)`.
pub fn adjointness_check<P: BilevelProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    x: &Point,
    y: &Point,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut worst = 0f64;
    for _ in 0..trials {
        let xi = random_tangent(x, rng);
        let eta = random_tangent(y, rng);
        let lhs = inner(y, &eta, &problem.cross_adjoint_apply(x, y, &xi)?)?;
        let rhs = inner(x, &problem.cross_apply(x, y, &eta)?, &xi)?;
        let defect = (lhs - rhs).abs() / (1.0 + norm(&xi)? * norm(&eta)?);
        if !defect.is_finite() {
            return Err(Error::NonFinite("adjointness defect"));
        }
        worst = worst.max(defect);
    }
    Ok(worst)
}
