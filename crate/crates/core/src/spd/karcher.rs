//! Squared geodesic distance `h(S) = dist(S, A)²` and its derivatives.
//!
//! Gradients and Hessians are those of `h` itself (the factor 2 of the square
//! is included), so they agree with finite differences of `dist(·, A)²`.

use nalgebra::DMatrix;

use super::calculus::{check_dim, spd_dim};
use super::eigen::{check_symmetric, eigen_pd, spd_inverse, sym, SqrtPair, SymEigen, SYMMETRY_TOL};
use super::frechet::{general_logm, frechet_log_eig, upper_block};
use crate::error::{Error, Result};
use crate::manifold::{Point, Tangent};

/// One data matrix of a weighted Karcher objective `Σ yᵢ dist(S, Aᵢ)²`.
#[derive(Debug, Clone)]
pub struct KarcherTerm {
    data_matrix: DMatrix<f64>,
    weight: f64,
    half: SqrtPair,
}

impl KarcherTerm {
    pub fn new(data_matrix: DMatrix<f64>, weight: f64) -> Result<Self> {
        check_symmetric(&data_matrix, SYMMETRY_TOL)?;
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("Karcher weight must be nonnegative, got {weight}")));
        }
        let data_matrix = sym(&data_matrix);
        let half = SqrtPair::of(&data_matrix)?;
        Ok(KarcherTerm {
            data_matrix,
            weight,
            half,
        })
    }

    pub fn data_matrix(&self) -> &DMatrix<f64> {
        &self.data_matrix
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("Karcher weight must be nonnegative, got {weight}")));
        }
        Ok(KarcherTerm {
            weight,
            ..self.clone()
        })
    }

    /// Unweighted `dist(S, A)²`.
    pub fn loss(&self, s: &DMatrix<f64>) -> Result<f64> {
        let y = eigen_pd(&self.half.whiten(s))?;
        Ok(y.values.iter().map(|l| l.ln().powi(2)).sum())
    }

    /// Caches everything the gradient and Hessian need at `S`.
    pub fn linearize(&self, s: &Point) -> Result<KarcherLinearization> {
        let d = spd_dim(s)?;
        check_dim(d, &self.data_matrix)?;
        let sm = s.matrix()?.clone();
        let s_inv = spd_inverse(&sm)?;
        let y_eig = eigen_pd(&self.half.whiten(&sm))?;
        let log_y = y_eig.map(f64::ln);
        let loss = y_eig.values.iter().map(|l| l.ln().powi(2)).sum();
        // ∇h = 2 S⁻¹ A^{1/2} log(A^{-1/2} S A^{-1/2}) A^{-1/2}
        let egrad = sym(&(&s_inv * &self.half.sqrt * &log_y * &self.half.inv_sqrt * 2.0));
        Ok(KarcherLinearization {
            s: sm,
            s_inv,
            a_sqrt: self.half.sqrt.clone(),
            a_inv_sqrt: self.half.inv_sqrt.clone(),
            y_eig,
            log_y,
            egrad,
            loss,
        })
    }
}

/// Derivative data of `dist(·, A)²` frozen at one base point.
#[derive(Debug, Clone)]
pub struct KarcherLinearization {
    s: DMatrix<f64>,
    s_inv: DMatrix<f64>,
    a_sqrt: DMatrix<f64>,
    a_inv_sqrt: DMatrix<f64>,
    y_eig: SymEigen,
    log_y: DMatrix<f64>,
    egrad: DMatrix<f64>,
    loss: f64,
}

impl KarcherLinearization {
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn egrad(&self) -> &DMatrix<f64> {
        &self.egrad
    }

    /// `S ∇h S`.
    pub fn rgrad(&self) -> DMatrix<f64> {
        sym(&(&self.s * &self.egrad * &self.s))
    }

    /// First term of `∇²h[V]` (derivative through the explicit `S⁻¹`), unsymmetrized and halved.
    fn inverse_term(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        -(&self.s_inv * v * &self.a_inv_sqrt * &self.log_y * &self.a_sqrt * &self.s_inv)
    }

    /// Euclidean Hessian `∇²h[V]`, symmetrized.
    pub fn ehess(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        // L = Pᵀ D log(Y)[Cᵀ] Qᵀ with P = Q = A^{-1/2}, C = A^{-1/2} V S⁻¹ A^{1/2}.
        let c_t = &self.a_sqrt * &self.s_inv * v * &self.a_inv_sqrt;
        let l = &self.a_inv_sqrt * frechet_log_eig(&self.y_eig, &c_t) * &self.a_inv_sqrt;
        sym(&((self.inverse_term(v) + l) * 2.0))
    }

    /// Riemannian Hessian `S ∇²h[V] S + sym(S ∇h V)`.
    pub fn rhess(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let ehess = self.ehess(v);
        let out = &self.s * ehess * &self.s + sym(&(&self.s * &self.egrad * v));
        sym(&out)
    }
}

/// `∇_S dist(S, A)² = 2 S^{-1/2} log(S^{1/2} A⁻¹ S^{1/2}) S^{-1/2}`.
pub fn karcher_egrad(s: &Point, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = spd_dim(s)?;
    check_dim(d, a)?;
    check_symmetric(a, SYMMETRY_TOL)?;
    let a_inv = spd_inverse(a)?;
    let half = SqrtPair::of(s.matrix()?)?;
    let inner = eigen_pd(&half.color(&a_inv))?;
    Ok(sym(&(&half.inv_sqrt * inner.map(f64::ln) * &half.inv_sqrt * 2.0)))
}

/// Riemannian Hessian of `dist(·, A)²` at `S` applied to `V`, via Daleckii–Krein.
pub fn karcher_rhess_apply(s: &Point, a: &DMatrix<f64>, v: &Tangent) -> Result<Tangent> {
    v.require_base(s)?;
    let lin = KarcherTerm::new(a.clone(), 1.0)?.linearize(s)?;
    Tangent::from_matrix(s, lin.rhess(v.matrix()?))
}

/// Reference Hessian: assembles `L` entry by entry, each entry the Frobenius
/// product of `[[0, C], [0, 0]]` with `log(diag(P,P) [[S, E_ij], [0, S]] diag(Q,Q))`,
/// using a general matrix logarithm. Costs `d²` logarithms of `2d × 2d` matrices.
pub fn karcher_rhess_apply_entrywise(s: &Point, a: &DMatrix<f64>, v: &Tangent) -> Result<Tangent> {
    v.require_base(s)?;
    let d = spd_dim(s)?;
    check_dim(d, a)?;
    let sm = s.matrix()?;
    let vm = v.matrix()?;
    let half = SqrtPair::of(a)?;
    let (p, q) = (&half.inv_sqrt, &half.inv_sqrt);
    let s_inv = spd_inverse(sm)?;
    let y = sym(&(p * sm * q));
    let log_y = eigen_pd(&y)?.map(f64::ln);
    let c = p * vm * &s_inv * &half.sqrt;

    let mut l = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut e = DMatrix::zeros(d, d);
            e[(i, j)] = 1.0;
            let log = general_logm(&upper_block(&y, &(p * e * q)))?;
            l[(i, j)] = log.view((0, d), (d, d)).component_mul(&c).sum();
        }
    }
    let inverse_term = -(&s_inv * vm * &half.inv_sqrt * &log_y * &half.sqrt * &s_inv);
    let ehess = sym(&((inverse_term + l) * 2.0));
    let egrad = sym(&(&s_inv * &half.sqrt * &log_y * &half.inv_sqrt * 2.0));
    let out = sm * ehess * sm + sym(&(sm * egrad * vm));
    Tangent::from_matrix(s, sym(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{exp_map, fd_directional_derivative, fd_second_derivative, inner, log_map};
    use crate::random::{random_spd, random_symmetric};
    use crate::spd::egrad_to_rgrad;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist_sq(a: &DMatrix<f64>) -> impl Fn(&Point) -> Result<f64> + '_ {
        move |p: &Point| {
            let t = KarcherTerm::new(a.clone(), 1.0)?;
            t.loss(p.as_matrix().unwrap())
        }
    }

    #[test]
    fn gradient_vanishes_at_data_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd(4, 10.0, &mut rng);
        let s = Point::spd(a.clone()).unwrap();
        assert!(karcher_egrad(&s, &a).unwrap().amax() < 1e-12);
    }

    #[test]
    fn scalar_gradient_is_twice_log_ratio_over_s() {
        let e = 1f64.exp();
        let s = Point::spd(DMatrix::from_element(1, 1, e)).unwrap();
        let g = karcher_egrad(&s, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((g[(0, 0)] - 2.0 / e).abs() < 1e-15);
    }

    #[test]
    fn scalar_hessian_is_two() {
        for (sv, av) in [(0.3, 2.0), (5.0, 1.5), (1.0, 1.0)] {
            let s = Point::spd(DMatrix::from_element(1, 1, sv)).unwrap();
            let v = Tangent::from_matrix(&s, DMatrix::from_element(1, 1, 0.7)).unwrap();
            let h = karcher_rhess_apply(&s, &DMatrix::from_element(1, 1, av), &v).unwrap();
            assert!((h.as_matrix().unwrap()[(0, 0)] - 1.4).abs() < 1e-13);
        }
    }

    #[test]
    fn hessian_at_identity_is_twice_the_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let id = Point::spd(DMatrix::identity(3, 3)).unwrap();
        let v = Tangent::from_matrix(&id, random_symmetric(3, &mut rng)).unwrap();
        let h = karcher_rhess_apply(&id, &DMatrix::identity(3, 3), &v).unwrap();
        assert!((h.as_matrix().unwrap() - v.as_matrix().unwrap() * 2.0).amax() < 1e-13);
    }

    #[test]
    fn riemannian_gradient_is_minus_twice_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(4, 10.0, &mut rng);
        let s = Point::spd(random_spd(4, 10.0, &mut rng)).unwrap();
        let rg = egrad_to_rgrad(&s, &karcher_egrad(&s, &a).unwrap()).unwrap();
        let log = log_map(&s, &Point::spd(a.clone()).unwrap()).unwrap();
        let want = log.as_matrix().unwrap() * -2.0;
        assert!((rg.as_matrix().unwrap() - &want).norm() < 1e-10 * want.norm());
        let lin = KarcherTerm::new(a, 1.0).unwrap().linearize(&s).unwrap();
        assert!((lin.rgrad() - &want).norm() < 1e-10 * want.norm());
    }

    #[test]
    fn derivatives_match_geodesic_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in [2, 3, 5] {
            let a = random_spd(d, 10.0, &mut rng);
            let s = Point::spd(random_spd(d, 10.0, &mut rng)).unwrap();
            let v = Tangent::from_matrix(&s, random_symmetric(d, &mut rng)).unwrap();
            let rg = egrad_to_rgrad(&s, &karcher_egrad(&s, &a).unwrap()).unwrap();
            let fd = fd_directional_derivative(dist_sq(&a), &s, &v, 1e-5).unwrap();
            let an = inner(&s, &rg, &v).unwrap();
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-8), "grad d={d}: {fd} vs {an}");

            let hv = karcher_rhess_apply(&s, &a, &v).unwrap();
            let quad = inner(&s, &hv, &v).unwrap();
            let fd2 = fd_second_derivative(dist_sq(&a), &s, &v, 1e-4).unwrap();
            assert!((fd2 - quad).abs() <= 1e-4 * quad.abs(), "hess d={d}: {fd2} vs {quad}");
            assert!(quad > 0.0);
        }
    }

    #[test]
    fn entrywise_assembly_matches_daleckii_krein() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 1..=5 {
            let a = random_spd(d, 10.0, &mut rng);
            let s = Point::spd(random_spd(d, 10.0, &mut rng)).unwrap();
            let v = Tangent::from_matrix(&s, random_symmetric(d, &mut rng)).unwrap();
            let fast = karcher_rhess_apply(&s, &a, &v).unwrap();
            let slow = karcher_rhess_apply_entrywise(&s, &a, &v).unwrap();
            let (f, sl) = (fast.as_matrix().unwrap(), slow.as_matrix().unwrap());
            assert!((f - sl).norm() <= 1e-8 * f.norm(), "d = {d}");
        }
    }

    #[test]
    fn hessian_is_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_spd(4, 10.0, &mut rng);
        let s = Point::spd(random_spd(4, 10.0, &mut rng)).unwrap();
        let u = Tangent::from_matrix(&s, random_symmetric(4, &mut rng)).unwrap();
        let v = Tangent::from_matrix(&s, random_symmetric(4, &mut rng)).unwrap();
        let hu = karcher_rhess_apply(&s, &a, &u).unwrap();
        let hv = karcher_rhess_apply(&s, &a, &v).unwrap();
        let lhs = inner(&s, &hu, &v).unwrap();
        let rhs = inner(&s, &u, &hv).unwrap();
        let scale = 1.0 + crate::manifold::norm(&u).unwrap() * crate::manifold::norm(&v).unwrap();
        assert!((lhs - rhs).abs() <= 1e-9 * scale);
    }

    #[test]
    fn exp_along_negative_gradient_decreases_loss() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let s = Point::spd(DMatrix::identity(2, 2)).unwrap();
        let term = KarcherTerm::new(a, 1.0).unwrap();
        let lin = term.linearize(&s).unwrap();
        let step = Tangent::from_matrix(&s, lin.rgrad() * -0.1).unwrap();
        let next = exp_map(&s, &step).unwrap();
        assert!(term.loss(next.as_matrix().unwrap()).unwrap() < lin.loss());
    }
}
