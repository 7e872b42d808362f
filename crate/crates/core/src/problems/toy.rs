//! Euclidean quadratic bilevel family with closed-form hypergradient.
//!
//! `f(x, y) = ½‖y‖² + ½xᵀDx`, `g(x, y) = ½yᵀAy − yᵀ(Bx + c)`, so
//! `y*(x) = A⁻¹(Bx + c)` and `∇Φ(x) = Dx + BᵀA⁻¹y*(x)`.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypergrad::{BilevelProblem, SmoothnessMeta, StochasticOracles};
use crate::manifold::{Manifold, Point, Tangent};
use crate::random::{gaussian_matrix, gaussian_vector, random_symmetric, with_spectrum};
use crate::spd::{sym, sym_eigen};

/// Radius of the ball of upper iterates assumed when bounding `‖∇f‖`.
pub const DEFAULT_RADIUS: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct ToyQuadratic {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DVector<f64>,
    d: DMatrix<f64>,
    a_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    sigma: f64,
    radius: f64,
    meta: SmoothnessMeta,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.singular_values().max()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl ToyQuadratic {
    /// Builds the instance from its matrices: `A` is `n×n` SPD, `B` is `n×m`,
    /// `c` has length `n`, `D` is `m×m` symmetric PSD. The closed-form
    /// hypergradient is checked against central differences of `Φ`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DVector<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = d.nrows();
        if n == 0 || m == 0 {
            return Err(Error::invalid("toy quadratic needs positive dimensions"));
        }
        if a.ncols() != n || b.nrows() != n || c.len() != n {
            return Err(Error::dims(format!("lower dimension {n}"), format!("A {}x{}, B {}x{}, c {}", a.nrows(), a.ncols(), b.nrows(), b.ncols(), c.len())));
        }
        if d.ncols() != m || b.ncols() != m {
            return Err(Error::dims(format!("upper dimension {m}"), format!("D {}x{}, B {}x{}", d.nrows(), d.ncols(), b.nrows(), b.ncols())));
        }
        let a = sym(&a);
        let d = sym(&d);
        let a_eig = sym_eigen(&a)?;
        if a_eig.min_value() <= 0.0 {
            return Err(Error::NotPositiveDefinite(a_eig.min_value()));
        }
        let d_eig = sym_eigen(&d)?;
        if d_eig.min_value() < -1e-12 * d_eig.max_value().abs().max(1.0) {
            return Err(Error::invalid("D must be positive semidefinite"));
        }
        let a_chol = nalgebra::Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite(f64::NAN))?;
        let d_norm = d_eig.max_value().max(0.0);
        let radius = DEFAULT_RADIUS;
        let meta = Self::meta_for(a_eig.min_value(), a_eig.max_value(), d_norm, c.norm(), radius, 0.0, spectral_norm(&b))?;
        let toy = ToyQuadratic {
            a,
            b,
            c,
            d,
            a_chol,
            sigma: 0.0,
            radius,
            meta,
        };
        toy.self_check()?;
        Ok(toy)
    }

    fn meta_for(mu: f64, l: f64, d_norm: f64, c_norm: f64, radius: f64, sigma: f64, b_norm: f64) -> Result<SmoothnessMeta> {
        // ‖∇f‖ ≤ √((‖D‖R)² + ‖y*‖²) with ‖y*‖ ≤ (‖B‖R + ‖c‖)/μ on the ball of radius R.
        let y_bound = (b_norm * radius + c_norm) / mu;
        let l_f0 = ((d_norm * radius).powi(2) + y_bound.powi(2)).sqrt();
        SmoothnessMeta::new(mu, l_f0, d_norm.max(1.0), l.max(mu), 0.0, sigma * sigma)
    }

    fn self_check(&self) -> Result<()> {
        let m = self.upper_dim();
        let x = DVector::from_fn(m, |i, _| ((i + 1) as f64 * 0.7).sin());
        let g = self.grad_phi(&x)?;
        let h = 1e-5;
        let fd = DVector::from_fn(m, |i, _| {
            let mut e = DVector::zeros(m);
            e[i] = h;
            let plus = self.phi(&(&x + &e)).unwrap_or(f64::NAN);
            let minus = self.phi(&(&x - &e)).unwrap_or(f64::NAN);
            (plus - minus) / (2.0 * h)
        });
        let err = (&fd - &g).norm();
        if !(err <= 1e-6 * g.norm().max(1.0)) {
            return Err(Error::invalid(format!("closed-form hypergradient fails the difference check ({err:e})")));
        }
        Ok(())
    }

    /// Random instance with `x ∈ Rᵐ`, `y ∈ Rⁿ`, `A` with spectrum evenly
    /// spread over `[1, κ]`, `‖B‖₂ = 1`, `D` with spectrum in `[0.5, 1.5]`.
    pub fn random(m: usize, n: usize, kappa: f64, seed: u64) -> Result<Self> {
        if !(kappa >= 1.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be at least 1, got {kappa}")));
        }
        if m == 0 || n == 0 {
            return Err(Error::invalid("toy quadratic needs positive dimensions"));
        }
        if n == 1 && kappa > 1.0 {
            return Err(Error::invalid("a one-dimensional lower level has kappa = 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = with_spectrum(&linspace(1.0, kappa, n), &mut rng);
        let b = gaussian_matrix(n, m, &mut rng);
        let b = &b / spectral_norm(&b);
        let c = gaussian_vector(n, &mut rng) / (n as f64).sqrt();
        let d = with_spectrum(&linspace(0.5, 1.5, m), &mut rng);
        Self::new(a, b, c, d)
    }

    /// Same instance with Gaussian noise of scale `sigma` on every stochastic oracle.
    pub fn with_noise(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
        }
        self.sigma = sigma;
        self.meta.sigma2 = sigma * sigma;
        Ok(self)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn upper_dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn lower_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.upper_dim() {
            Ok(())
        } else {
            Err(Error::dims(self.upper_dim(), x.len()))
        }
    }

    /// `y*(x) = A⁻¹(Bx + c)`.
    pub fn inner_solution(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        Ok(self.a_chol.solve(&(&self.b * x + &self.c)))
    }

    /// `Φ(x) = f(x, y*(x))`.
    pub fn phi(&self, x: &DVector<f64>) -> Result<f64> {
        let y = self.inner_solution(x)?;
        Ok(0.5 * y.norm_squared() + 0.5 * x.dot(&(&self.d * x)))
    }

    /// `∇Φ(x) = Dx + BᵀA⁻¹y*(x)`.
    pub fn grad_phi(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let y = self.inner_solution(x)?;
        Ok(&self.d * x + self.b.transpose() * self.a_chol.solve(&y))
    }

    /// Exact Lipschitz constant of `∇Φ`: the largest eigenvalue of `D + BᵀA⁻²B`.
    pub fn phi_curvature(&self) -> Result<f64> {
        let ab = self.a_chol.solve(&self.b);
        let hess = &self.d + ab.transpose() * ab;
        Ok(sym_eigen(&sym(&hess))?.max_value())
    }

    pub fn upper_point(&self, x: DVector<f64>) -> Result<Point> {
        self.check_x(&x)?;
        Point::euclidean(x)
    }

    pub fn lower_point(&self, y: DVector<f64>) -> Result<Point> {
        if y.len() != self.lower_dim() {
            return Err(Error::dims(self.lower_dim(), y.len()));
        }
        Point::euclidean(y)
    }

    fn noise(&self, n: usize, rng: &mut dyn RngCore) -> DVector<f64> {
        gaussian_vector(n, rng) * self.sigma
    }
}

impl BilevelProblem for ToyQuadratic {
    fn upper_manifold(&self) -> Manifold {
        Manifold::Euclidean(self.upper_dim())
    }

    fn lower_manifold(&self) -> Manifold {
        Manifold::Euclidean(self.lower_dim())
    }

    fn meta(&self) -> SmoothnessMeta {
        self.meta
    }

    fn upper_value(&self, x: &Point, y: &Point) -> Result<f64> {
        let (xv, yv) = (x.vector()?, y.vector()?);
        Ok(0.5 * yv.norm_squared() + 0.5 * xv.dot(&(&self.d * xv)))
    }

    fn lower_value(&self, x: &Point, y: &Point) -> Result<f64> {
        let (xv, yv) = (x.vector()?, y.vector()?);
        Ok(0.5 * yv.dot(&(&self.a * yv)) - yv.dot(&(&self.b * xv + &self.c)))
    }

    fn grad_x_f(&self, x: &Point, _y: &Point) -> Result<Tangent> {
        Tangent::from_vector(x, &self.d * x.vector()?)
    }

    fn grad_y_f(&self, _x: &Point, y: &Point) -> Result<Tangent> {
        Tangent::from_vector(y, y.vector()?.clone())
    }

    fn grad_y_g(&self, x: &Point, y: &Point) -> Result<Tangent> {
        let (xv, yv) = (x.vector()?, y.vector()?);
        Tangent::from_vector(y, &self.a * yv - &self.b * xv - &self.c)
    }

    fn hvp(&self, _x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
        v.require_base(y)?;
        Tangent::from_vector(y, &self.a * v.vector()?)
    }

    fn cross_apply(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
        v.require_base(y)?;
        Tangent::from_vector(x, -(self.b.transpose() * v.vector()?))
    }

    fn cross_adjoint_apply(&self, x: &Point, y: &Point, xi: &Tangent) -> Result<Tangent> {
        xi.require_base(x)?;
        Tangent::from_vector(y, -(&self.b * xi.vector()?))
    }

    fn stochastic(&self) -> Option<&dyn StochasticOracles> {
        Some(self)
    }
}

impl StochasticOracles for ToyQuadratic {
    fn sample_upper_grads(&self, x: &Point, y: &Point, rng: &mut dyn RngCore) -> Result<(Tangent, Tangent)> {
        let gx = self.grad_x_f(x, y)?;
        let gy = self.grad_y_f(x, y)?;
        if self.sigma == 0.0 {
            return Ok((gx, gy));
        }
        let nx = self.noise(self.upper_dim(), rng);
        let ny = self.noise(self.lower_dim(), rng);
        Ok((
            Tangent::from_vector(x, gx.vector()? + nx)?,
            Tangent::from_vector(y, gy.vector()? + ny)?,
        ))
    }

    fn sample_grad_y_g(&self, x: &Point, y: &Point, rng: &mut dyn RngCore) -> Result<Tangent> {
        let g = self.grad_y_g(x, y)?;
        if self.sigma == 0.0 {
            return Ok(g);
        }
        let noise = self.noise(self.lower_dim(), rng);
        Tangent::from_vector(y, g.vector()? + noise)
    }

    fn sample_hvp(&self, x: &Point, y: &Point, v: &Tangent, rng: &mut dyn RngCore) -> Result<Tangent> {
        let hv = self.hvp(x, y, v)?;
        if self.sigma == 0.0 {
            return Ok(hv);
        }
        let noise = random_symmetric(self.lower_dim(), rng) * self.sigma;
        Tangent::from_vector(y, hv.vector()? + noise * v.vector()?)
    }

    fn sample_cross(&self, x: &Point, y: &Point, v: &Tangent, rng: &mut dyn RngCore) -> Result<Tangent> {
        let out = self.cross_apply(x, y, v)?;
        if self.sigma == 0.0 {
            return Ok(out);
        }
        let noise = gaussian_matrix(self.lower_dim(), self.upper_dim(), rng) * self.sigma;
        Tangent::from_vector(x, out.vector()? - noise.transpose() * v.vector()?)
    }
}

/// Random toy instance; see [`ToyQuadratic::random`].
pub fn make_toy_quadratic(m: usize, n: usize, kappa_target: f64, seed: u64) -> Result<ToyQuadratic> {
    ToyQuadratic::random(m, n, kappa_target, seed)
}
