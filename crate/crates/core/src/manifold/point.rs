use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{asymmetry, sym, SYMMETRY_TOL};

/// Relative asymmetry tolerated (and then removed) in SPD tangent payloads.
const TANGENT_SYMMETRY_TOL: f64 = 1e-8;
const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// The geometries a point can live on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    Euclidean(usize),
    /// Symmetric positive definite `d × d` matrices with the affine-invariant metric.
    Spd(usize),
    /// The probability simplex as a convex subset of `Rⁿ` (not a Riemannian manifold).
    Simplex(usize),
    Product(Box<Manifold>, Box<Manifold>),
}

impl Manifold {
    pub fn product(first: Manifold, second: Manifold) -> Self {
        Manifold::Product(Box::new(first), Box::new(second))
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self {
            Manifold::Euclidean(n) => *n,
            Manifold::Spd(d) => d * (d + 1) / 2,
            Manifold::Simplex(n) => n.saturating_sub(1),
            Manifold::Product(a, b) => a.dim() + b.dim(),
        }
    }

    pub(crate) fn check_point(&self, payload: Payload) -> Result<Payload> {
        match (self, payload) {
            (Manifold::Euclidean(n), Payload::Vector(v)) => {
                expect_len(self, *n, v.len())?;
                finite_vec(&v, "Euclidean point")?;
                Ok(Payload::Vector(v))
            }
            (Manifold::Simplex(n), Payload::Vector(v)) => {
                expect_len(self, *n, v.len())?;
                finite_vec(&v, "simplex point")?;
                if let Some(neg) = v.iter().copied().find(|&x| x < 0.0) {
                    return Err(self.off(format!("negative entry {neg:e}")));
                }
                let total: f64 = v.sum();
                if (total - 1.0).abs() > SIMPLEX_SUM_TOL {
                    return Err(self.off(format!("entries sum to {total}")));
                }
                Ok(Payload::Vector(v))
            }
            (Manifold::Spd(d), Payload::Matrix(m)) => {
                expect_shape(self, *d, &m)?;
                if m.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("SPD point"));
                }
                let asym = asymmetry(&m);
                if asym > SYMMETRY_TOL * m.amax() {
                    return Err(self.off(format!("asymmetry {asym:e}")));
                }
                let m = sym(&m);
                if *d > 0 && nalgebra::Cholesky::new(m.clone()).is_none() {
                    return Err(self.off("not positive definite".to_string()));
                }
                Ok(Payload::Matrix(m))
            }
            (Manifold::Product(a, b), Payload::Pair(p, q)) => Ok(Payload::Pair(
                Box::new(a.check_point(*p)?),
                Box::new(b.check_point(*q)?),
            )),
            (_, other) => Err(Error::dims(self, other.shape())),
        }
    }

    pub(crate) fn check_tangent(&self, payload: Payload) -> Result<Payload> {
        match (self, payload) {
            (Manifold::Euclidean(n) | Manifold::Simplex(n), Payload::Vector(v)) => {
                expect_len(self, *n, v.len())?;
                finite_vec(&v, "tangent vector")?;
                Ok(Payload::Vector(v))
            }
            (Manifold::Spd(d), Payload::Matrix(m)) => {
                expect_shape(self, *d, &m)?;
                if m.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("tangent vector"));
                }
                let asym = asymmetry(&m);
                if asym > TANGENT_SYMMETRY_TOL * m.amax() {
                    return Err(Error::NotSymmetric(asym));
                }
                Ok(Payload::Matrix(sym(&m)))
            }
            (Manifold::Product(a, b), Payload::Pair(p, q)) => Ok(Payload::Pair(
                Box::new(a.check_tangent(*p)?),
                Box::new(b.check_tangent(*q)?),
            )),
            (_, other) => Err(Error::dims(self, other.shape())),
        }
    }

    pub(crate) fn zero_payload(&self) -> Payload {
        match self {
            Manifold::Euclidean(n) | Manifold::Simplex(n) => Payload::Vector(DVector::zeros(*n)),
            Manifold::Spd(d) => Payload::Matrix(DMatrix::zeros(*d, *d)),
            Manifold::Product(a, b) => {
                Payload::Pair(Box::new(a.zero_payload()), Box::new(b.zero_payload()))
            }
        }
    }

    fn off(&self, reason: String) -> Error {
        Error::NotOnManifold {
            manifold: self.to_string(),
            reason,
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manifold::Euclidean(n) => write!(f, "R^{n}"),
            Manifold::Spd(d) => write!(f, "SPD({d})"),
            Manifold::Simplex(n) => write!(f, "Simplex({n})"),
            Manifold::Product(a, b) => write!(f, "{a} x {b}"),
        }
    }
}

fn expect_len(m: &Manifold, n: usize, got: usize) -> Result<()> {
    if n == got {
        Ok(())
    } else {
        Err(Error::dims(m, format!("vector of length {got}")))
    }
}

fn expect_shape(m: &Manifold, d: usize, x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == d && x.ncols() == d {
        Ok(())
    } else {
        Err(Error::dims(m, format!("{}x{} matrix", x.nrows(), x.ncols())))
    }
}

fn finite_vec(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Dense coordinates of a point or tangent vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
    Pair(Box<Payload>, Box<Payload>),
}

impl Payload {
    pub fn shape(&self) -> String {
        match self {
            Payload::Vector(v) => format!("vector of length {}", v.len()),
            Payload::Matrix(m) => format!("{}x{} matrix", m.nrows(), m.ncols()),
            Payload::Pair(a, b) => format!("({}, {})", a.shape(), b.shape()),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Payload::Vector(v) => v.iter().all(|x| x.is_finite()),
            Payload::Matrix(m) => m.iter().all(|x| x.is_finite()),
            Payload::Pair(a, b) => a.is_finite() && b.is_finite(),
        }
    }

    pub(crate) fn scale(&self, a: f64) -> Payload {
        match self {
            Payload::Vector(v) => Payload::Vector(v * a),
            Payload::Matrix(m) => Payload::Matrix(m * a),
            Payload::Pair(p, q) => Payload::Pair(Box::new(p.scale(a)), Box::new(q.scale(a))),
        }
    }

    /// `self + a · other`; shapes are validated by the caller.
    pub(crate) fn axpy(&self, a: f64, other: &Payload) -> Result<Payload> {
        match (self, other) {
            (Payload::Vector(x), Payload::Vector(y)) if x.len() == y.len() => {
                Ok(Payload::Vector(x + y * a))
            }
            (Payload::Matrix(x), Payload::Matrix(y)) if x.shape() == y.shape() => {
                Ok(Payload::Matrix(x + y * a))
            }
            (Payload::Pair(x1, x2), Payload::Pair(y1, y2)) => Ok(Payload::Pair(
                Box::new(x1.axpy(a, y1)?),
                Box::new(x2.axpy(a, y2)?),
            )),
            (x, y) => Err(Error::dims(x.shape(), y.shape())),
        }
    }

    /// Flat Euclidean (Frobenius) inner product of coordinates.
    pub(crate) fn flat_dot(&self, other: &Payload) -> Result<f64> {
        match (self, other) {
            (Payload::Vector(x), Payload::Vector(y)) if x.len() == y.len() => Ok(x.dot(y)),
            (Payload::Matrix(x), Payload::Matrix(y)) if x.shape() == y.shape() => Ok(x.dot(y)),
            (Payload::Pair(x1, x2), Payload::Pair(y1, y2)) => {
                Ok(x1.flat_dot(y1)? + x2.flat_dot(y2)?)
            }
            (x, y) => Err(Error::dims(x.shape(), y.shape())),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Payload::Vector(v) => v.amax(),
            Payload::Matrix(m) => m.amax(),
            Payload::Pair(a, b) => a.max_abs().max(b.max_abs()),
        }
    }
}

#[derive(Debug, PartialEq)]
struct PointData {
    manifold: Manifold,
    payload: Payload,
}

/// A validated point on a [`Manifold`]. Cloning is cheap (shared storage).
#[derive(Debug, Clone)]
pub struct Point(Arc<PointData>);

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Point {
    pub fn new(manifold: Manifold, payload: Payload) -> Result<Self> {
        let payload = manifold.check_point(payload)?;
        Ok(Point(Arc::new(PointData { manifold, payload })))
    }

    pub fn euclidean(v: DVector<f64>) -> Result<Self> {
        Point::new(Manifold::Euclidean(v.len()), Payload::Vector(v))
    }

    pub fn spd(m: DMatrix<f64>) -> Result<Self> {
        Point::new(Manifold::Spd(m.nrows()), Payload::Matrix(m))
    }

    pub fn simplex(v: DVector<f64>) -> Result<Self> {
        Point::new(Manifold::Simplex(v.len()), Payload::Vector(v))
    }

    pub fn pair(first: &Point, second: &Point) -> Self {
        let manifold = Manifold::product(first.manifold().clone(), second.manifold().clone());
        let payload = Payload::Pair(
            Box::new(first.payload().clone()),
            Box::new(second.payload().clone()),
        );
        Point(Arc::new(PointData { manifold, payload }))
    }

    pub fn manifold(&self) -> &Manifold {
        &self.0.manifold
    }

    pub fn payload(&self) -> &Payload {
        &self.0.payload
    }

    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self.payload() {
            Payload::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self.payload() {
            Payload::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub(crate) fn vector(&self) -> Result<&DVector<f64>> {
        self.as_vector()
            .ok_or_else(|| Error::dims("vector-valued point", self.manifold()))
    }

    pub(crate) fn matrix(&self) -> Result<&DMatrix<f64>> {
        self.as_matrix()
            .ok_or_else(|| Error::dims("matrix-valued point", self.manifold()))
    }

    /// Components of a product point.
    pub fn split(&self) -> Option<(Point, Point)> {
        match (self.manifold(), self.payload()) {
            (Manifold::Product(a, b), Payload::Pair(p, q)) => Some((
                Point(Arc::new(PointData {
                    manifold: (**a).clone(),
                    payload: (**p).clone(),
                })),
                Point(Arc::new(PointData {
                    manifold: (**b).clone(),
                    payload: (**q).clone(),
                })),
            )),
            _ => None,
        }
    }

    /// Wraps an already validated payload.
    pub(crate) fn trusted(manifold: Manifold, payload: Payload) -> Self {
        Point(Arc::new(PointData { manifold, payload }))
    }
}

/// A tangent vector anchored at its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    base: Point,
    payload: Payload,
}

impl Tangent {
    pub fn new(base: &Point, payload: Payload) -> Result<Self> {
        let payload = base.manifold().check_tangent(payload)?;
        Ok(Tangent {
            base: base.clone(),
            payload,
        })
    }

    pub fn from_vector(base: &Point, v: DVector<f64>) -> Result<Self> {
        Tangent::new(base, Payload::Vector(v))
    }

    pub fn from_matrix(base: &Point, m: DMatrix<f64>) -> Result<Self> {
        Tangent::new(base, Payload::Matrix(m))
    }

    pub fn zero(base: &Point) -> Self {
        Tangent {
            base: base.clone(),
            payload: base.manifold().zero_payload(),
        }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match &self.payload {
            Payload::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.payload {
            Payload::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub(crate) fn vector(&self) -> Result<&DVector<f64>> {
        self.as_vector()
            .ok_or_else(|| Error::dims("vector-valued tangent", self.base.manifold()))
    }

    pub(crate) fn matrix(&self) -> Result<&DMatrix<f64>> {
        self.as_matrix()
            .ok_or_else(|| Error::dims("matrix-valued tangent", self.base.manifold()))
    }

    pub fn is_based_at(&self, p: &Point) -> bool {
        self.base == *p
    }

    pub(crate) fn require_base(&self, p: &Point) -> Result<()> {
        if self.is_based_at(p) {
            Ok(())
        } else {
            Err(Error::BaseMismatch)
        }
    }

    pub fn scale(&self, a: f64) -> Tangent {
        Tangent {
            base: self.base.clone(),
            payload: self.payload.scale(a),
        }
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &Tangent) -> Result<Tangent> {
        other.require_base(&self.base)?;
        Ok(Tangent {
            base: self.base.clone(),
            payload: self.payload.axpy(a, &other.payload)?,
        })
    }

    pub fn add(&self, other: &Tangent) -> Result<Tangent> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Tangent) -> Result<Tangent> {
        self.axpy(-1.0, other)
    }

    /// Components of a tangent on a product manifold.
    pub fn split(&self) -> Option<(Tangent, Tangent)> {
        let (p, q) = self.base.split()?;
        match &self.payload {
            Payload::Pair(u, v) => Some((
                Tangent {
                    base: p,
                    payload: (**u).clone(),
                },
                Tangent {
                    base: q,
                    payload: (**v).clone(),
                },
            )),
            _ => None,
        }
    }

    /// Tangent on the product manifold at `Point::pair(u.base, v.base)`.
    pub fn pair(u: &Tangent, v: &Tangent) -> Tangent {
        Tangent {
            base: Point::pair(&u.base, &v.base),
            payload: Payload::Pair(Box::new(u.payload.clone()), Box::new(v.payload.clone())),
        }
    }

    pub(crate) fn trusted(base: &Point, payload: Payload) -> Self {
        Tangent {
            base: base.clone(),
            payload,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_spd_points() {
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(Point::spd(ok).is_ok());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            Point::spd(indefinite),
            Err(Error::NotOnManifold { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(Point::spd(asym).is_err());
        let nan = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert_eq!(Point::spd(nan), Err(Error::NonFinite("SPD point")));
    }

    #[test]
    fn validates_simplex_points() {
        assert!(Point::simplex(DVector::from_vec(vec![0.25, 0.75])).is_ok());
        assert!(Point::simplex(DVector::from_vec(vec![-0.25, 1.25])).is_err());
        assert!(Point::simplex(DVector::from_vec(vec![0.5, 0.6])).is_err());
    }

    #[test]
    fn tangent_arithmetic_requires_common_base() {
        let p = Point::euclidean(DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let q = Point::euclidean(DVector::from_vec(vec![1.0, 3.0])).unwrap();
        let u = Tangent::from_vector(&p, DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let v = Tangent::from_vector(&q, DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(u.add(&v), Err(Error::BaseMismatch));
        let p_again = Point::euclidean(DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let w = Tangent::from_vector(&p_again, DVector::from_vec(vec![0.0, 1.0])).unwrap();
        let sum = u.add(&w).unwrap();
        assert_eq!(sum.as_vector().unwrap().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        let p = Point::euclidean(DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!(matches!(
            Tangent::from_vector(&p, DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Tangent::from_matrix(&p, DMatrix::zeros(2, 2)).is_err());
    }
}
