//! Gaussian negative log-likelihood `𝓛(S; x) = ½ logdet S + ½ xᵀ S⁻¹ x`.
//!
//! The weighted sum `Σ yᵢ 𝓛(S; xᵢ)` only depends on the data through
//! `w = Σ yᵢ` and the weighted second moment `M = Σ yᵢ xᵢ xᵢᵀ`, so the
//! moment forms below serve both single data points and whole datasets.

use nalgebra::{DMatrix, DVector};

use super::calculus::{check_dim, spd_dim};
use super::eigen::{spd_inverse, sym};
use crate::error::{Error, Result};
use crate::manifold::Point;

fn check_x(s: &Point, x: &DVector<f64>) -> Result<usize> {
    let d = spd_dim(s)?;
    if x.len() != d {
        return Err(Error::dims(d, x.len()));
    }
    Ok(d)
}

pub fn mle_loss(s: &Point, x: &DVector<f64>) -> Result<f64> {
    check_x(s, x)?;
    moment_loss(s, 1.0, &(x * x.transpose()))
}

/// `½ S⁻¹ − ½ S⁻¹ x xᵀ S⁻¹`.
pub fn mle_egrad(s: &Point, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_x(s, x)?;
    moment_egrad(s, 1.0, &(x * x.transpose()))
}

/// `−½ S⁻¹VS⁻¹ + ½ (S⁻¹VS⁻¹xxᵀS⁻¹ + S⁻¹xxᵀS⁻¹VS⁻¹)`, symmetrized.
pub fn mle_ehess_apply(s: &Point, x: &DVector<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_x(s, x)?;
    moment_ehess(s, 1.0, &(x * x.transpose()), v)
}

/// `½ w logdet S + ½ tr(S⁻¹ M)`.
pub fn moment_loss(s: &Point, weight_sum: f64, moment: &DMatrix<f64>) -> Result<f64> {
    let d = spd_dim(s)?;
    check_dim(d, moment)?;
    let sm = s.matrix()?;
    let chol = nalgebra::Cholesky::new(sm.clone()).ok_or(Error::NotPositiveDefinite(f64::NAN))?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = chol.solve(moment).trace();
    Ok(0.5 * weight_sum * logdet + 0.5 * quad)
}

pub fn moment_egrad(s: &Point, weight_sum: f64, moment: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = spd_dim(s)?;
    check_dim(d, moment)?;
    let s_inv = spd_inverse(s.matrix()?)?;
    Ok(sym(&((&s_inv * weight_sum - &s_inv * moment * &s_inv) * 0.5)))
}

pub fn moment_ehess(
    s: &Point,
    weight_sum: f64,
    moment: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = spd_dim(s)?;
    check_dim(d, moment)?;
    check_dim(d, v)?;
    let s_inv = spd_inverse(s.matrix()?)?;
    let svs = &s_inv * v * &s_inv;
    let sms = &s_inv * moment * &s_inv;
    let out = &svs * (-0.5 * weight_sum) + (&svs * moment * &s_inv + &sms * v * &s_inv) * 0.5;
    Ok(sym(&out))
}

/// Riemannian gradient of the moment form, `½ (w S − M)`.
pub fn moment_rgrad(s: &Point, weight_sum: f64, moment: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = spd_dim(s)?;
    check_dim(d, moment)?;
    Ok(sym(&((s.matrix()? * weight_sum - moment) * 0.5)))
}

/// Riemannian Hessian of the moment form: `½ sym(V S⁻¹ M)`.
///
/// `logdet` is geodesically linear and contributes nothing; the quadratic
/// term yields `S ∇²[V] S + sym(S ∇ V) = ½ sym(V S⁻¹ M)` after cancellation.
pub fn moment_rhess(
    s: &Point,
    weight_sum: f64,
    moment: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let _ = weight_sum;
    let d = spd_dim(s)?;
    check_dim(d, moment)?;
    check_dim(d, v)?;
    let s_inv = spd_inverse(s.matrix()?)?;
    Ok(sym(&(v * &s_inv * moment * 0.5)))
}
