//! Distributionally robust estimation on the SPD manifold:
//!
//! `min_{y ∈ Δₙ} λ‖y − 1/n‖² − Σ yᵢ ℓ(S*; ξᵢ)` with `S* = argmin_S Σ yᵢ ℓ(S; ξᵢ)`,
//!
//! where `ℓ` is either the squared geodesic distance to a data matrix
//! (robust Karcher mean) or the Gaussian negative log-likelihood of a data
//! vector (robust covariance estimation).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{generate_gaussian_data, generate_spd_data};
use crate::error::{Error, Result};
use crate::hypergrad::{BilevelProblem, LinearOperator, SmoothnessMeta};
use crate::manifold::{distance, Manifold, Point, Tangent};
use crate::random::random_spd;
use crate::spd::{spd_inverse, sym, KarcherLinearization, KarcherTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustKind {
    Karcher,
    Mle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RobustData {
    Karcher(Vec<DMatrix<f64>>),
    Mle(Vec<DVector<f64>>),
}

/// Inline data in a JSON instance document: row-major matrices or vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InlineData {
    Matrices(Vec<Vec<Vec<f64>>>),
    Vectors(Vec<Vec<f64>>),
}

fn default_lambda() -> f64 {
    1.0
}

fn default_conditioning() -> f64 {
    10.0
}

/// Serializable description of a [`RobustInstance`]: either inline data or
/// a seed for the synthetic generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustSpec {
    pub kind: RobustKind,
    pub d: usize,
    pub n: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    /// Eigenvalue spread of generated SPD data (Karcher) or of the true covariance (MLE).
    #[serde(default = "default_conditioning")]
    pub conditioning: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<InlineData>,
}

#[derive(Debug, Clone)]
pub struct RobustInstance {
    kind: RobustKind,
    d: usize,
    n: usize,
    lambda: f64,
    terms: Vec<KarcherTerm>,
    samples: DMatrix<f64>,
    meta: SmoothnessMeta,
}

fn matrix_from_rows(rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::dims(format!("{d}x{d} matrix"), "ragged or mis-sized rows"));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl RobustInstance {
    pub fn new(data: RobustData, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
        }
        match data {
            RobustData::Karcher(mats) => Self::karcher(mats, lambda),
            RobustData::Mle(xs) => Self::mle(xs, lambda),
        }
    }

    fn karcher(mats: Vec<DMatrix<f64>>, lambda: f64) -> Result<Self> {
        let n = mats.len();
        if n == 0 {
            return Err(Error::invalid("robust instance needs at least one datum"));
        }
        let d = mats[0].nrows();
        let points = mats.iter().map(|a| Point::spd(a.clone())).collect::<Result<Vec<_>>>()?;
        for p in &points {
            if p.manifold() != &Manifold::Spd(d) {
                return Err(Error::dims(Manifold::Spd(d), p.manifold()));
            }
        }
        let mut r = 0f64;
        for i in 0..n {
            for j in i + 1..n {
                r = r.max(distance(&points[i], &points[j])?);
            }
        }
        let terms = points
            .iter()
            .map(|p| KarcherTerm::new(p.as_matrix().expect("SPD payload").clone(), 1.0))
            .collect::<Result<Vec<_>>>()?;
        // Over the geodesic hull of the data: the Hessian of dist² lies in
        // [2, 2 r coth r], losses are at most r², gradients at most 2r.
        let l_g1 = 2.0 * if r > 1e-8 { r / r.tanh() } else { 1.0 };
        let l_f0 = ((2.0 * lambda * 2f64.sqrt() + (n as f64).sqrt() * r * r).powi(2) + (2.0 * r).powi(2)).sqrt();
        let l_f1 = 2.0 * lambda + 2.0 * r * (n as f64).sqrt() + l_g1;
        let meta = SmoothnessMeta::new(2.0, l_f0, l_f1, l_g1, l_g1, 0.0)?;
        Ok(RobustInstance {
            kind: RobustKind::Karcher,
            d,
            n,
            lambda,
            terms,
            samples: DMatrix::zeros(d, 0),
            meta,
        })
    }

    fn mle(xs: Vec<DVector<f64>>, lambda: f64) -> Result<Self> {
        let n = xs.len();
        if n == 0 {
            return Err(Error::invalid("robust instance needs at least one datum"));
        }
        let d = xs[0].len();
        if d == 0 || xs.iter().any(|x| x.len() != d) {
            return Err(Error::dims(d, "data vectors of differing length"));
        }
        if xs.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("data vector"));
        }
        let samples = DMatrix::from_columns(&xs);
        let max_sq = xs.iter().map(|x| x.norm_squared()).fold(0f64, f64::max);
        // The Hessian is ½ sym(V S⁻¹ M): equal to ½ at the stationary point
        // S = M; the constants assume S⁻¹M stays within [½, 2].
        let meta = SmoothnessMeta::new(0.25, 2.0 * lambda * 2f64.sqrt() + (n as f64).sqrt() * max_sq, 2.0 * lambda + 1.0, 1.0, 1.0, 0.0)?;
        Ok(RobustInstance {
            kind: RobustKind::Mle,
            d,
            n,
            lambda,
            terms: Vec::new(),
            samples,
            meta,
        })
    }

    /// Builds an instance from inline data or generates it from the seed.
    pub fn from_spec(spec: &RobustSpec) -> Result<Self> {
        if spec.d == 0 || spec.n == 0 {
            return Err(Error::invalid("d and n must be positive"));
        }
        let data = match (&spec.data, spec.kind) {
            (Some(InlineData::Matrices(ms)), RobustKind::Karcher) => {
                RobustData::Karcher(ms.iter().map(|m| matrix_from_rows(m, spec.d)).collect::<Result<_>>()?)
            }
            (Some(InlineData::Vectors(vs)), RobustKind::Mle) => {
                RobustData::Mle(vs.iter().map(|v| DVector::from_vec(v.clone())).collect())
            }
            (Some(_), kind) => {
                return Err(Error::invalid(format!("inline data does not match kind {kind:?}")));
            }
            (None, RobustKind::Karcher) => {
                RobustData::Karcher(generate_spd_data(spec.d, spec.n, spec.conditioning, spec.seed)?)
            }
            (None, RobustKind::Mle) => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                let cov = random_spd(spec.d, spec.conditioning, &mut rng);
                RobustData::Mle(generate_gaussian_data(spec.d, spec.n, spec.seed.wrapping_add(1), &cov)?)
            }
        };
        let inst = Self::new(data, spec.lambda)?;
        if inst.n != spec.n || inst.d != spec.d {
            return Err(Error::dims(
                format!("d = {}, n = {}", spec.d, spec.n),
                format!("d = {}, n = {}", inst.d, inst.n),
            ));
        }
        Ok(inst)
    }

    pub fn kind(&self) -> RobustKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn data(&self) -> RobustData {
        match self.kind {
            RobustKind::Karcher => RobustData::Karcher(self.terms.iter().map(|t| t.data_matrix().clone()).collect()),
            RobustKind::Mle => RobustData::Mle(self.samples.column_iter().map(|c| c.into_owned()).collect()),
        }
    }

    /// `y = 1/n`.
    pub fn uniform_weights(&self) -> Point {
        Point::simplex(DVector::from_element(self.n, 1.0 / self.n as f64)).expect("uniform weights lie on the simplex")
    }

    /// `S = I`.
    pub fn initial_lower(&self) -> Point {
        Point::spd(DMatrix::identity(self.d, self.d)).expect("identity is SPD")
    }

    fn check_weights(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() == self.n {
            Ok(())
        } else {
            Err(Error::dims(format!("{} weights", self.n), y.len()))
        }
    }

    fn check_spd(&self, s: &Point) -> Result<()> {
        if s.manifold() == &Manifold::Spd(self.d) {
            Ok(())
        } else {
            Err(Error::dims(Manifold::Spd(self.d), s.manifold()))
        }
    }

    fn linearize_all(&self, s: &Point) -> Result<Vec<KarcherLinearization>> {
        self.terms.iter().map(|t| t.linearize(s)).collect()
    }

    fn weighted_moment(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.d, self.n, |i, j| self.samples[(i, j)] * y[j]);
        sym(&(scaled * self.samples.transpose()))
    }

    /// Per-datum losses `(ℓ(S; ξ₁), …, ℓ(S; ξₙ))`.
    pub fn losses(&self, s: &Point) -> Result<DVector<f64>> {
        self.check_spd(s)?;
        match self.kind {
            RobustKind::Karcher => Ok(DVector::from_iterator(
                self.n,
                self.linearize_all(s)?.iter().map(|l| l.loss()),
            )),
            RobustKind::Mle => {
                let sm = s.matrix()?;
                let chol = nalgebra::Cholesky::new(sm.clone()).ok_or(Error::NotPositiveDefinite(f64::NAN))?;
                let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                let solved = chol.solve(&self.samples);
                Ok(DVector::from_fn(self.n, |i, _| {
                    0.5 * logdet + 0.5 * self.samples.column(i).dot(&solved.column(i))
                }))
            }
        }
    }

    /// Riemannian gradients of the per-datum losses at `S`.
    pub fn datum_gradients(&self, s: &Point) -> Result<Vec<DMatrix<f64>>> {
        self.check_spd(s)?;
        match self.kind {
            RobustKind::Karcher => Ok(self.linearize_all(s)?.iter().map(|l| l.rgrad()).collect()),
            RobustKind::Mle => {
                let sm = s.matrix()?;
                Ok(self
                    .samples
                    .column_iter()
                    .map(|x| sym(&((sm - x * x.transpose()) * 0.5)))
                    .collect())
            }
        }
    }

    /// `g(y, S) = Σ yᵢ ℓ(S; ξᵢ)`.
    pub fn lower_objective(&self, y: &DVector<f64>, s: &Point) -> Result<f64> {
        self.check_weights(y)?;
        Ok(y.dot(&self.losses(s)?))
    }

    /// Riemannian gradient of `g(y, ·)` at `S`.
    pub fn lower_gradient(&self, y: &DVector<f64>, s: &Point) -> Result<DMatrix<f64>> {
        self.check_weights(y)?;
        self.check_spd(s)?;
        match self.kind {
            RobustKind::Karcher => {
                let mut g = DMatrix::zeros(self.d, self.d);
                for (t, w) in self.terms.iter().zip(y.iter()) {
                    if *w != 0.0 {
                        g += t.linearize(s)?.rgrad() * *w;
                    }
                }
                Ok(sym(&g))
            }
            RobustKind::Mle => {
                let m = self.weighted_moment(y);
                Ok(sym(&((s.matrix()? * y.sum() - m) * 0.5)))
            }
        }
    }

    /// Riemannian Hessian of `g(y, ·)` at `S` as an operator on `T_S`.
    pub fn lower_hessian_at(&self, y: &DVector<f64>, s: &Point) -> Result<RobustHessian> {
        self.check_weights(y)?;
        self.check_spd(s)?;
        let inner = match self.kind {
            RobustKind::Karcher => {
                let mut parts = Vec::new();
                for (t, w) in self.terms.iter().zip(y.iter()) {
                    if *w != 0.0 {
                        parts.push((*w, t.linearize(s)?));
                    }
                }
                HessianKind::Karcher(parts)
            }
            RobustKind::Mle => {
                let s_inv = spd_inverse(s.matrix()?)?;
                HessianKind::Mle(s_inv * self.weighted_moment(y) * 0.5)
            }
        };
        Ok(RobustHessian {
            base: s.clone(),
            inner,
        })
    }

    /// `2λ(y − 1/n) − (ℓ(S; ξᵢ))ᵢ`.
    pub fn upper_gradient(&self, y: &DVector<f64>, s: &Point) -> Result<DVector<f64>> {
        self.check_weights(y)?;
        let centered = y.map(|v| v - 1.0 / self.n as f64);
        Ok(centered * (2.0 * self.lambda) - self.losses(s)?)
    }

    /// `λ‖y − 1/n‖² − Σ yᵢ ℓ(S; ξᵢ)`.
    pub fn upper_objective(&self, y: &DVector<f64>, s: &Point) -> Result<f64> {
        self.check_weights(y)?;
        let centered = y.map(|v| v - 1.0 / self.n as f64);
        Ok(self.lambda * centered.norm_squared() - y.dot(&self.losses(s)?))
    }

    /// `(⟨grad ℓᵢ(S), V⟩_S)ᵢ`.
    pub fn cross_apply_at(&self, s: &Point, v: &Tangent) -> Result<DVector<f64>> {
        self.check_spd(s)?;
        v.require_base(s)?;
        let s_inv = spd_inverse(s.matrix()?)?;
        let w = sym(&(&s_inv * v.matrix()? * &s_inv));
        match self.kind {
            RobustKind::Karcher => Ok(DVector::from_iterator(
                self.n,
                self.datum_gradients(s)?.iter().map(|g| g.dot(&w)),
            )),
            RobustKind::Mle => {
                // ⟨½(S − xxᵀ), V⟩_S = ½ tr(S⁻¹V) − ½ xᵀ S⁻¹VS⁻¹ x.
                let half_trace = 0.5 * (s_inv * v.matrix()?).trace();
                let wx = &w * &self.samples;
                Ok(DVector::from_fn(self.n, |i, _| {
                    half_trace - 0.5 * self.samples.column(i).dot(&wx.column(i))
                }))
            }
        }
    }

    /// `Σ uᵢ grad ℓᵢ(S)`.
    pub fn cross_adjoint_at(&self, s: &Point, u: &DVector<f64>) -> Result<Tangent> {
        self.check_weights(u)?;
        self.check_spd(s)?;
        let out = match self.kind {
            RobustKind::Karcher => {
                let mut acc = DMatrix::zeros(self.d, self.d);
                for (g, w) in self.datum_gradients(s)?.iter().zip(u.iter()) {
                    acc += g * *w;
                }
                acc
            }
            RobustKind::Mle => (s.matrix()? * u.sum() - self.weighted_moment(u)) * 0.5,
        };
        Tangent::from_matrix(s, sym(&out))
    }
}

enum HessianKind {
    Karcher(Vec<(f64, KarcherLinearization)>),
    /// `½ S⁻¹ M`; the Hessian is `sym(V · this)`.
    Mle(DMatrix<f64>),
}

/// Lower Hessian of a robust instance with its factorizations cached.
pub struct RobustHessian {
    base: Point,
    inner: HessianKind,
}

impl LinearOperator for RobustHessian {
    fn apply(&self, v: &Tangent) -> Result<Tangent> {
        v.require_base(&self.base)?;
        let vm = v.matrix()?;
        let out = match &self.inner {
            HessianKind::Karcher(parts) => {
                let mut acc = DMatrix::zeros(vm.nrows(), vm.ncols());
                for (w, lin) in parts {
                    acc += lin.rhess(vm) * *w;
                }
                sym(&acc)
            }
            HessianKind::Mle(half_sinv_m) => sym(&(vm * half_sinv_m)),
        };
        Tangent::from_matrix(&self.base, out)
    }
}

/// Lower-level pieces of a robust instance at fixed weights `y`.
pub struct RobustLower<'a> {
    instance: &'a RobustInstance,
    weights: DVector<f64>,
}

impl RobustLower<'_> {
    pub fn value(&self, s: &Point) -> Result<f64> {
        self.instance.lower_objective(&self.weights, s)
    }

    pub fn gradient(&self, s: &Point) -> Result<Tangent> {
        Tangent::from_matrix(s, self.instance.lower_gradient(&self.weights, s)?)
    }

    pub fn hvp(&self, s: &Point, v: &Tangent) -> Result<Tangent> {
        self.instance.lower_hessian_at(&self.weights, s)?.apply(v)
    }

    pub fn hessian(&self, s: &Point) -> Result<RobustHessian> {
        self.instance.lower_hessian_at(&self.weights, s)
    }
}

/// Lower objective `g(y, ·)`, its gradient and Hessian at fixed weights.
pub fn robust_lower_oracles<'a>(instance: &'a RobustInstance, y: &DVector<f64>) -> Result<RobustLower<'a>> {
    instance.check_weights(y)?;
    Ok(RobustLower {
        instance,
        weights: y.clone(),
    })
}

pub fn robust_upper_grad(instance: &RobustInstance, y: &DVector<f64>, s: &Point) -> Result<DVector<f64>> {
    instance.upper_gradient(y, s)
}

pub fn robust_cross_apply(instance: &RobustInstance, y: &DVector<f64>, s: &Point, v: &Tangent) -> Result<DVector<f64>> {
    instance.check_weights(y)?;
    instance.cross_apply_at(s, v)
}

pub fn robust_cross_adjoint(instance: &RobustInstance, y: &DVector<f64>, s: &Point, u: &DVector<f64>) -> Result<Tangent> {
    instance.check_weights(y)?;
    instance.cross_adjoint_at(s, u)
}

impl BilevelProblem for RobustInstance {
    fn upper_manifold(&self) -> Manifold {
        Manifold::Simplex(self.n)
    }

    fn lower_manifold(&self) -> Manifold {
        Manifold::Spd(self.d)
    }

    fn meta(&self) -> SmoothnessMeta {
        self.meta
    }

    fn upper_value(&self, x: &Point, y: &Point) -> Result<f64> {
        self.upper_objective(x.vector()?, y)
    }

    fn lower_value(&self, x: &Point, y: &Point) -> Result<f64> {
        self.lower_objective(x.vector()?, y)
    }

    fn grad_x_f(&self, x: &Point, y: &Point) -> Result<Tangent> {
        Tangent::from_vector(x, self.upper_gradient(x.vector()?, y)?)
    }

    fn grad_y_f(&self, x: &Point, y: &Point) -> Result<Tangent> {
        Tangent::from_matrix(y, -self.lower_gradient(x.vector()?, y)?)
    }

    fn grad_y_g(&self, x: &Point, y: &Point) -> Result<Tangent> {
        Tangent::from_matrix(y, self.lower_gradient(x.vector()?, y)?)
    }

    fn hvp(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
        self.lower_hessian_at(x.vector()?, y)?.apply(v)
    }

    fn cross_apply(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
        Tangent::from_vector(x, self.cross_apply_at(y, v)?)
    }

    fn cross_adjoint_apply(&self, x: &Point, y: &Point, xi: &Tangent) -> Result<Tangent> {
        xi.require_base(x)?;
        self.cross_adjoint_at(y, xi.vector()?)
    }

    fn lower_hessian<'a>(&'a self, x: &'a Point, y: &'a Point) -> Result<Box<dyn LinearOperator + 'a>> {
        Ok(Box::new(self.lower_hessian_at(x.vector()?, y)?))
    }
}
