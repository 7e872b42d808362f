//! Euclidean-to-Riemannian conversion of derivatives on the SPD manifold.

use nalgebra::DMatrix;

use super::eigen::sym;
use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};

pub(crate) fn spd_dim(s: &Point) -> Result<usize> {
    match s.manifold() {
        Manifold::Spd(d) => Ok(*d),
        other => Err(Error::dims("SPD point", other)),
    }
}

pub(crate) fn check_dim(d: usize, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == d && m.ncols() == d {
        Ok(())
    } else {
        Err(Error::dims(format!("{d}x{d}"), format!("{}x{}", m.nrows(), m.ncols())))
    }
}

/// Riemannian gradient `S G S` from the Euclidean gradient `G`.
pub fn egrad_to_rgrad(s: &Point, egrad: &DMatrix<f64>) -> Result<Tangent> {
    let d = spd_dim(s)?;
    check_dim(d, egrad)?;
    let sm = s.matrix()?;
    Tangent::from_matrix(s, sym(&(sm * egrad * sm)))
}

/// Riemannian Hessian-vector product `S·∇²h[V]·S + sym(S·∇h·V)`.
pub fn ehess_to_rhess(
    s: &Point,
    egrad: &DMatrix<f64>,
    ehess_v: &DMatrix<f64>,
    v: &Tangent,
) -> Result<Tangent> {
    v.require_base(s)?;
    let d = spd_dim(s)?;
    check_dim(d, egrad)?;
    check_dim(d, ehess_v)?;
    let sm = s.matrix()?;
    let vm = v.matrix()?;
    let out = sm * ehess_v * sm + sym(&(sm * egrad * vm));
    Tangent::from_matrix(s, sym(&out))
}
