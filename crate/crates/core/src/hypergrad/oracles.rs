use rand::RngCore;

use super::meta::SmoothnessMeta;
use crate::error::Result;
use crate::manifold::{Manifold, Point, Tangent};

/// A linear map on one tangent space.
pub trait LinearOperator {
    fn apply(&self, v: &Tangent) -> Result<Tangent>;
}

impl<F> LinearOperator for F
where
    F: Fn(&Tangent) -> Result<Tangent>,
{
    fn apply(&self, v: &Tangent) -> Result<Tangent> {
        self(v)
    }
}

/// Deterministic oracles of `min_x f(x, y*(x))` with `y*(x) = argmin_y g(x, y)`.
///
/// `x` lives on the upper manifold and `y` on the lower one. Gradients are
/// Riemannian. `hvp` is the Hessian of `g(x, ·)` at `y`; `cross_apply` maps
/// `v ∈ T_y` to `∇²_{y,x} g[v] ∈ T_x` and `cross_adjoint_apply` maps
/// `ξ ∈ T_x` to `∇²_{x,y} g[ξ] ∈ T_y`.
pub trait BilevelProblem {
    fn upper_manifold(&self) -> Manifold;
    fn lower_manifold(&self) -> Manifold;
    fn meta(&self) -> SmoothnessMeta;

    fn upper_value(&self, x: &Point, y: &Point) -> Result<f64>;
    fn lower_value(&self, x: &Point, y: &Point) -> Result<f64>;
    fn grad_x_f(&self, x: &Point, y: &Point) -> Result<Tangent>;
    fn grad_y_f(&self, x: &Point, y: &Point) -> Result<Tangent>;
    fn grad_y_g(&self, x: &Point, y: &Point) -> Result<Tangent>;
    fn hvp(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent>;
    fn cross_apply(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent>;
    fn cross_adjoint_apply(&self, x: &Point, y: &Point, xi: &Tangent) -> Result<Tangent>;

    /// The lower Hessian at `(x, y)` as an operator. Implementations may cache
    /// factorizations shared by repeated applications.
    fn lower_hessian<'a>(&'a self, x: &'a Point, y: &'a Point) -> Result<Box<dyn LinearOperator + 'a>> {
        Ok(Box::new(move |v: &Tangent| self.hvp(x, y, v)))
    }

    fn stochastic(&self) -> Option<&dyn StochasticOracles> {
        None
    }
}

/// Single-sample stochastic oracles. Each call draws fresh noise from `rng`.
/// With zero variance an implementation must return the deterministic value
/// and leave `rng` untouched.
pub trait StochasticOracles {
    /// `(∇_x F(x, y; ξ), ∇_y F(x, y; ξ))` sharing one sample `ξ`.
    fn sample_upper_grads(&self, x: &Point, y: &Point, rng: &mut dyn RngCore) -> Result<(Tangent, Tangent)>;
    fn sample_grad_y_g(&self, x: &Point, y: &Point, rng: &mut dyn RngCore) -> Result<Tangent>;
    fn sample_hvp(&self, x: &Point, y: &Point, v: &Tangent, rng: &mut dyn RngCore) -> Result<Tangent>;
    fn sample_cross(&self, x: &Point, y: &Point, v: &Tangent, rng: &mut dyn RngCore) -> Result<Tangent>;
}
