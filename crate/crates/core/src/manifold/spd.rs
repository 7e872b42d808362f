//! Affine-invariant geometry on symmetric positive definite matrices.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::spd::{eigen_of_sym, spd_inverse, sym, SqrtPair};

/// `Exp_S(V) = S^{1/2} exp(S^{-1/2} V S^{-1/2}) S^{1/2}`.
pub(crate) fn exp(s: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let half = SqrtPair::of(s)?;
    let w = eigen_of_sym(&half.whiten(v))?;
    Ok(half.color(&w.map(f64::exp)))
}

/// `Log_S(T) = S^{1/2} log(S^{-1/2} T S^{-1/2}) S^{1/2}`.
pub(crate) fn log(s: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let half = SqrtPair::of(s)?;
    let w = eigen_of_sym(&half.whiten(t))?;
    w.require_positive()?;
    Ok(half.color(&w.map(f64::ln)))
}

/// `‖log(S^{-1/2} T S^{-1/2})‖_F`.
pub(crate) fn distance(s: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<f64> {
    let half = SqrtPair::of(s)?;
    let w = eigen_of_sym(&half.whiten(t))?;
    w.require_positive()?;
    Ok(w.values.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

/// `tr(S⁻¹ U S⁻¹ V)`.
pub(crate) fn inner(s: &DMatrix<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let s_inv = spd_inverse(s)?;
    let a = &s_inv * u;
    let b = &s_inv * v;
    // tr(AB) = Σ_ij A_ij B_ji
    Ok(a.component_mul(&b.transpose()).sum())
}

/// `E V Eᵀ` with `E = (T S⁻¹)^{1/2} = S^{1/2} (S^{-1/2} T S^{-1/2})^{1/2} S^{-1/2}`.
pub(crate) fn transport(s: &DMatrix<f64>, t: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let half = SqrtPair::of(s)?;
    let w = eigen_of_sym(&half.whiten(t))?;
    w.require_positive()?;
    let e = &half.sqrt * w.map(f64::sqrt) * &half.inv_sqrt;
    Ok(sym(&(&e * v * e.transpose())))
}
