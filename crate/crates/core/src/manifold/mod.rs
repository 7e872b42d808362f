//! Points, tangent vectors and the Riemannian operations on them.
//!
//! Every operation dispatches on the [`Manifold`] tag: Euclidean spaces,
//! the SPD cone with the affine-invariant metric, the probability simplex
//! (a constraint set, so it has no logarithm or transport) and products
//! of these, handled componentwise.

mod point;
mod spd;

pub use point::{Manifold, Payload, Point, Tangent};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::random::{gaussian_vector, random_symmetric};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Default step for central second differences, where rounding error scales like `1/h²`.
pub const FD2_STEP: f64 = 1e-3;

fn same_manifold(p: &Point, q: &Point) -> Result<()> {
    if p.manifold() == q.manifold() {
        Ok(())
    } else {
        Err(Error::dims(p.manifold(), q.manifold()))
    }
}

fn unsupported(op: &'static str, m: &Manifold) -> Error {
    Error::Unsupported {
        op,
        manifold: m.to_string(),
    }
}

fn exp_payload(m: &Manifold, p: &Payload, v: &Payload) -> Result<Payload> {
    match (m, p, v) {
        (Manifold::Euclidean(_) | Manifold::Simplex(_), Payload::Vector(x), Payload::Vector(u)) => {
            Ok(Payload::Vector(x + u))
        }
        (Manifold::Spd(_), Payload::Matrix(s), Payload::Matrix(u)) => {
            Ok(Payload::Matrix(spd::exp(s, u)?))
        }
        (Manifold::Product(a, b), Payload::Pair(p1, p2), Payload::Pair(v1, v2)) => Ok(
            Payload::Pair(Box::new(exp_payload(a, p1, v1)?), Box::new(exp_payload(b, p2, v2)?)),
        ),
        _ => Err(Error::dims(m, v.shape())),
    }
}

fn log_payload(m: &Manifold, p: &Payload, q: &Payload) -> Result<Payload> {
    match (m, p, q) {
        (Manifold::Euclidean(_), Payload::Vector(x), Payload::Vector(y)) => {
            Ok(Payload::Vector(y - x))
        }
        (Manifold::Spd(_), Payload::Matrix(s), Payload::Matrix(t)) => {
            Ok(Payload::Matrix(spd::log(s, t)?))
        }
        (Manifold::Simplex(_), _, _) => Err(unsupported("log_map", m)),
        (Manifold::Product(a, b), Payload::Pair(p1, p2), Payload::Pair(q1, q2)) => Ok(
            Payload::Pair(Box::new(log_payload(a, p1, q1)?), Box::new(log_payload(b, p2, q2)?)),
        ),
        _ => Err(Error::dims(m, q.shape())),
    }
}

fn distance_sq_payload(m: &Manifold, p: &Payload, q: &Payload) -> Result<f64> {
    match (m, p, q) {
        (Manifold::Euclidean(_) | Manifold::Simplex(_), Payload::Vector(x), Payload::Vector(y)) => {
            Ok((y - x).norm_squared())
        }
        (Manifold::Spd(_), Payload::Matrix(s), Payload::Matrix(t)) => {
            Ok(spd::distance(s, t)?.powi(2))
        }
        (Manifold::Product(a, b), Payload::Pair(p1, p2), Payload::Pair(q1, q2)) => {
            Ok(distance_sq_payload(a, p1, q1)? + distance_sq_payload(b, p2, q2)?)
        }
        _ => Err(Error::dims(m, q.shape())),
    }
}

fn inner_payload(m: &Manifold, p: &Payload, u: &Payload, v: &Payload) -> Result<f64> {
    match (m, p, u, v) {
        (Manifold::Spd(_), Payload::Matrix(s), Payload::Matrix(a), Payload::Matrix(b)) => {
            spd::inner(s, a, b)
        }
        (Manifold::Product(ma, mb), Payload::Pair(p1, p2), Payload::Pair(u1, u2), Payload::Pair(v1, v2)) => {
            Ok(inner_payload(ma, p1, u1, v1)? + inner_payload(mb, p2, u2, v2)?)
        }
        (Manifold::Euclidean(_) | Manifold::Simplex(_), _, _, _) => u.flat_dot(v),
        _ => Err(Error::dims(m, u.shape())),
    }
}

fn transport_payload(m: &Manifold, p: &Payload, q: &Payload, v: &Payload) -> Result<Payload> {
    match (m, p, q, v) {
        (Manifold::Euclidean(_), _, _, _) => Ok(v.clone()),
        (Manifold::Spd(_), Payload::Matrix(s), Payload::Matrix(t), Payload::Matrix(u)) => {
            Ok(Payload::Matrix(spd::transport(s, t, u)?))
        }
        (Manifold::Simplex(_), _, _, _) => Err(unsupported("parallel_transport", m)),
        (Manifold::Product(a, b), Payload::Pair(p1, p2), Payload::Pair(q1, q2), Payload::Pair(v1, v2)) => {
            Ok(Payload::Pair(
                Box::new(transport_payload(a, p1, q1, v1)?),
                Box::new(transport_payload(b, p2, q2, v2)?),
            ))
        }
        _ => Err(Error::dims(m, v.shape())),
    }
}

/// Endpoint of the geodesic leaving `p` with initial velocity `v`.
pub fn exp_map(p: &Point, v: &Tangent) -> Result<Point> {
    v.require_base(p)?;
    if !v.payload().is_finite() {
        return Err(Error::NonFinite("exp_map direction"));
    }
    let out = exp_payload(p.manifold(), p.payload(), v.payload())?;
    match p.manifold() {
        // Leaving the simplex is an error, not a silent projection.
        Manifold::Simplex(_) | Manifold::Product(..) => Point::new(p.manifold().clone(), out),
        Manifold::Euclidean(_) | Manifold::Spd(_) => {
            if !out.is_finite() {
                return Err(Error::NonFinite("exp_map result"));
            }
            Ok(Point::trusted(p.manifold().clone(), out))
        }
    }
}

/// Inverse of [`exp_map`]: the tangent at `p` pointing along the geodesic to `q`.
pub fn log_map(p: &Point, q: &Point) -> Result<Tangent> {
    same_manifold(p, q)?;
    let payload = log_payload(p.manifold(), p.payload(), q.payload())?;
    if !payload.is_finite() {
        return Err(Error::NonFinite("log_map result"));
    }
    Ok(Tangent::trusted(p, payload))
}

/// Geodesic distance.
pub fn distance(p: &Point, q: &Point) -> Result<f64> {
    same_manifold(p, q)?;
    let d2 = distance_sq_payload(p.manifold(), p.payload(), q.payload())?;
    if !d2.is_finite() {
        return Err(Error::NonFinite("distance"));
    }
    Ok(d2.sqrt())
}

/// Riemannian inner product `⟨u, v⟩_p`.
pub fn inner(p: &Point, u: &Tangent, v: &Tangent) -> Result<f64> {
    u.require_base(p)?;
    v.require_base(p)?;
    inner_payload(p.manifold(), p.payload(), u.payload(), v.payload())
}

/// Riemannian norm of a tangent at its own base point.
pub fn norm(v: &Tangent) -> Result<f64> {
    Ok(inner(v.base(), v, v)?.max(0.0).sqrt())
}

/// Parallel transport of `v ∈ T_p` along the geodesic from `p` to `q`.
pub fn parallel_transport(p: &Point, q: &Point, v: &Tangent) -> Result<Tangent> {
    v.require_base(p)?;
    same_manifold(p, q)?;
    if p == q {
        return Ok(v.clone());
    }
    let payload = transport_payload(p.manifold(), p.payload(), q.payload(), v.payload())?;
    Ok(Tangent::trusted(q, payload))
}

/// Central difference of `f` along the geodesic through `p` with velocity `v`.
pub fn fd_directional_derivative<F>(f: F, p: &Point, v: &Tangent, h: f64) -> Result<f64>
where
    F: Fn(&Point) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let plus = f(&exp_map(p, &v.scale(h))?)?;
    let minus = f(&exp_map(p, &v.scale(-h))?)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Central second difference of `f` along the geodesic, `d²/dt² f(Exp_p(tv))` at 0.
pub fn fd_second_derivative<F>(f: F, p: &Point, v: &Tangent, h: f64) -> Result<f64>
where
    F: Fn(&Point) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let plus = f(&exp_map(p, &v.scale(h))?)?;
    let mid = f(p)?;
    let minus = f(&exp_map(p, &v.scale(-h))?)?;
    Ok((plus - 2.0 * mid + minus) / (h * h))
}

fn basis_payloads(m: &Manifold) -> Vec<Payload> {
    match m {
        Manifold::Euclidean(n) | Manifold::Simplex(n) => (0..*n)
            .map(|i| {
                let mut e = DVector::zeros(*n);
                e[i] = 1.0;
                Payload::Vector(e)
            })
            .collect(),
        Manifold::Spd(d) => {
            let mut out = Vec::with_capacity(d * (d + 1) / 2);
            for j in 0..*d {
                for i in j..*d {
                    let mut e = DMatrix::zeros(*d, *d);
                    e[(i, j)] = 1.0;
                    e[(j, i)] = 1.0;
                    out.push(Payload::Matrix(e));
                }
            }
            out
        }
        Manifold::Product(a, b) => {
            let (za, zb) = (a.zero_payload(), b.zero_payload());
            let first = basis_payloads(a)
                .into_iter()
                .map(|p| Payload::Pair(Box::new(p), Box::new(zb.clone())));
            let second = basis_payloads(b)
                .into_iter()
                .map(|q| Payload::Pair(Box::new(za.clone()), Box::new(q)));
            first.chain(second).collect()
        }
    }
}

/// A coordinate basis of the tangent space at `p` (not orthonormal in the metric).
pub fn tangent_basis(p: &Point) -> Vec<Tangent> {
    basis_payloads(p.manifold())
        .into_iter()
        .map(|b| Tangent::trusted(p, b))
        .collect()
}

fn random_payload<R: Rng + ?Sized>(m: &Manifold, rng: &mut R) -> Payload {
    match m {
        Manifold::Euclidean(n) | Manifold::Simplex(n) => Payload::Vector(gaussian_vector(*n, rng)),
        Manifold::Spd(d) => Payload::Matrix(random_symmetric(*d, rng)),
        Manifold::Product(a, b) => {
            let first = random_payload(a, rng);
            Payload::Pair(Box::new(first), Box::new(random_payload(b, rng)))
        }
    }
}

/// Tangent at `p` with standard Gaussian coordinates.
pub fn random_tangent<R: Rng + ?Sized>(p: &Point, rng: &mut R) -> Tangent {
    Tangent::trusted(p, random_payload(p.manifold(), rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_spd, random_symmetric};
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vecp(v: &[f64]) -> Point {
        Point::euclidean(DVector::from_row_slice(v)).unwrap()
    }

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn euclidean_exp_is_a_straight_line() {
        let p = vecp(&[1.0, 2.0]);
        let v = Tangent::from_vector(&p, DVector::from_vec(vec![0.5, -1.0])).unwrap();
        let q = exp_map(&p, &v).unwrap();
        assert_eq!(q.as_vector().unwrap().as_slice(), &[1.5, 1.0]);
        assert_eq!(log_map(&p, &q).unwrap().as_vector().unwrap().as_slice(), &[0.5, -1.0]);
    }

    #[test]
    fn zero_tangent_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Point::spd(random_spd(3, 10.0, &mut rng)).unwrap();
        let q = exp_map(&p, &Tangent::zero(&p)).unwrap();
        assert!((q.as_matrix().unwrap() - p.as_matrix().unwrap()).amax() < 1e-12);
        assert!(norm(&log_map(&p, &p).unwrap()).unwrap() < 1e-12);
        assert!(distance(&p, &p).unwrap() < 1e-12);
    }

    #[test]
    fn spd_exp_at_identity_is_matrix_exponential() {
        let id = Point::spd(DMatrix::identity(2, 2)).unwrap();
        let v = Tangent::from_matrix(&id, diag(&[2f64.ln(), 3f64.ln()])).unwrap();
        let q = exp_map(&id, &v).unwrap();
        assert!((q.as_matrix().unwrap() - diag(&[2.0, 3.0])).amax() < 1e-14);
    }

    #[test]
    fn spd_distance_example() {
        let id = Point::spd(DMatrix::identity(2, 2)).unwrap();
        let q = Point::spd(diag(&[1f64.exp().powi(2), 1.0])).unwrap();
        assert!((distance(&id, &q).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spd_metric_at_identity_is_frobenius() {
        let id = Point::spd(DMatrix::identity(2, 2)).unwrap();
        let u = Tangent::from_matrix(&id, DMatrix::identity(2, 2)).unwrap();
        assert!((inner(&id, &u, &u).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn transport_is_identity_for_equal_points_and_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Point::spd(random_spd(3, 5.0, &mut rng)).unwrap();
        let v = Tangent::from_matrix(&p, random_symmetric(3, &mut rng)).unwrap();
        assert_eq!(parallel_transport(&p, &p, &v).unwrap(), v);
        let x = vecp(&[0.0, 1.0]);
        let y = vecp(&[3.0, -1.0]);
        let u = Tangent::from_vector(&x, DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let moved = parallel_transport(&x, &y, &u).unwrap();
        assert!(moved.is_based_at(&y));
        assert_eq!(moved.as_vector(), u.as_vector());
    }

    #[test]
    fn simplex_has_no_log_or_transport() {
        let p = Point::simplex(DVector::from_vec(vec![0.5, 0.5])).unwrap();
        let q = Point::simplex(DVector::from_vec(vec![0.25, 0.75])).unwrap();
        assert!(matches!(log_map(&p, &q), Err(Error::Unsupported { .. })));
        let v = Tangent::zero(&p);
        assert!(matches!(parallel_transport(&p, &q, &v), Err(Error::Unsupported { .. })));
        assert!((distance(&p, &q).unwrap() - (2.0 * 0.0625f64).sqrt()).abs() < 1e-15);
        let inside = Tangent::from_vector(&p, DVector::from_vec(vec![0.1, -0.1])).unwrap();
        assert!(exp_map(&p, &inside).is_ok());
        let outside = Tangent::from_vector(&p, DVector::from_vec(vec![1.0, -1.0])).unwrap();
        assert!(exp_map(&p, &outside).is_err());
    }

    #[test]
    fn base_mismatch_and_non_finite_are_errors() {
        let p = vecp(&[0.0, 0.0]);
        let q = vecp(&[1.0, 0.0]);
        let v = Tangent::zero(&q);
        assert_eq!(exp_map(&p, &v), Err(Error::BaseMismatch));
        assert_eq!(inner(&p, &v, &v), Err(Error::BaseMismatch));
        let huge = Tangent::from_vector(&p, DVector::from_vec(vec![1.0, 0.0]))
            .unwrap()
            .scale(f64::INFINITY);
        assert!(matches!(exp_map(&p, &huge), Err(Error::NonFinite(_))));
    }

    #[test]
    fn product_distance_is_componentwise() {
        let a = vecp(&[0.0]);
        let b = vecp(&[0.0]);
        let c = vecp(&[3.0]);
        let d = vecp(&[4.0]);
        let p = Point::pair(&a, &b);
        let q = Point::pair(&c, &d);
        assert!((distance(&p, &q).unwrap() - 5.0).abs() < 1e-15);
        let r = Point::pair(&a, &d);
        assert!((distance(&p, &r).unwrap() - distance(&b, &d).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn fd_directional_derivative_examples() {
        let p = vecp(&[1.0, -2.0]);
        let v = Tangent::from_vector(&p, DVector::from_vec(vec![0.3, 0.7])).unwrap();
        let constant = fd_directional_derivative(|_| Ok(4.0), &p, &v, FD_STEP).unwrap();
        assert_eq!(constant, 0.0);
        let quad = |x: &Point| Ok(0.5 * x.as_vector().unwrap().norm_squared());
        let got = fd_directional_derivative(quad, &p, &v, FD_STEP).unwrap();
        assert!((got - (0.3 - 1.4)).abs() < 1e-9);
        assert!(fd_directional_derivative(quad, &p, &v, 0.0).is_err());
    }
}
