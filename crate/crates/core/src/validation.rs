//! Built-in invariant suite: geometry identities, derivative oracles against
//! finite differences, estimator accuracy and solver sanity checks.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::hypergrad::{
    adjointness_check, aid_hypergradient, cg_error_bound, deterministic_neumann_hypergradient,
    exact_hypergradient, neumann_bias_bound, tangent_cg, BilevelProblem, EstimatorConfig,
};
use crate::manifold::{
    distance, exp_map, fd_directional_derivative, fd_second_derivative, inner, log_map, norm,
    parallel_transport, random_tangent, Point, Tangent, FD2_STEP, FD_STEP,
};
use crate::problems::{RobustData, RobustInstance, RobustKind, RobustSpec, ToyQuadratic};
use crate::random::{gaussian_vector, random_spd, random_symmetric, with_spectrum};
use crate::solvers::{lower_gd, project_simplex};
use crate::spd::{
    frechet_log, frechet_log_block, karcher_rhess_apply, karcher_rhess_apply_entrywise, spd_inv_sqrt,
    spd_log, spd_sqrt, sym,
};

/// Outcome of one check: the worst observed defect against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    /// Set when the check could not be evaluated.
    pub error: Option<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.worst <= self.tolerance
    }
}

type Check = fn(usize, &mut ChaCha8Rng) -> Result<f64>;

const CHECKS: &[(&str, f64, Check)] = &[
    ("exp/log round trip", 1e-9, round_trip),
    ("speed preservation", 1e-9, speed),
    ("transport isometry", 1e-10, isometry),
    ("product distance", 1e-12, product_distance),
    ("triangle inequality", 1e-9, triangle),
    ("affine invariance", 1e-9, affine_invariance),
    ("log derivative: eigenbasis vs block logarithm", 1e-8, frechet_equivalence),
    ("log derivative vs finite differences", 1e-6, frechet_differences),
    ("distance Hessian: eigenbasis vs entrywise", 1e-8, karcher_entrywise),
    ("lower gradients vs finite differences", 1e-5, lower_gradients),
    ("lower Hessians vs second differences", 1e-4, lower_hessians),
    ("Hessian self-adjointness", 1e-9, self_adjointness),
    ("cross-derivative adjointness", 1e-8, cross_adjointness),
    ("CG error within 2√κ contraction bound", 1e-6, cg_contraction),
    ("Neumann bias within bound", 1e-6, neumann_bias),
    ("AID hypergradient on toy quadratic", 1e-8, aid_exactness),
    ("toy closed form vs finite differences", 1e-7, toy_closed_form),
    ("simplex projection vs active-set search", 1e-9, simplex_projection),
    ("two-point Karcher mean", 1e-6, karcher_midpoint),
];

/// Runs every check. `fast` uses fewer random cases.
pub fn run_suite(fast: bool) -> Vec<CheckReport> {
    let cases = if fast { 10 } else { 100 };
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, tolerance, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + i as u64);
            let start = Instant::now();
            let outcome = check(cases, &mut rng);
            let seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok(worst) => CheckReport {
                    name,
                    worst,
                    tolerance: *tolerance,
                    seconds,
                    error: None,
                },
                Err(e) => CheckReport {
                    name,
                    worst: f64::INFINITY,
                    tolerance: *tolerance,
                    seconds,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Relative difference with a floor on the scale.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

const DIMS: [usize; 3] = [2, 5, 10];

fn spd_point(d: usize, rng: &mut ChaCha8Rng) -> Result<Point> {
    Point::spd(random_spd(d, 10.0, rng))
}

/// Random tangent rescaled to norm `radius · u` with `u` uniform on `[0, 1)`.
fn bounded_tangent(p: &Point, radius: f64, rng: &mut ChaCha8Rng) -> Result<Tangent> {
    let v = random_tangent(p, rng);
    let n = norm(&v)?;
    Ok(v.scale(radius * rng.random::<f64>() / n.max(f64::MIN_POSITIVE)))
}

fn unit_tangent(p: &Point, rng: &mut ChaCha8Rng) -> Result<Tangent> {
    let v = random_tangent(p, rng);
    let n = norm(&v)?;
    Ok(v.scale(1.0 / n))
}

fn over_dims(cases: usize, rng: &mut ChaCha8Rng, mut f: impl FnMut(usize, &mut ChaCha8Rng) -> Result<f64>) -> Result<f64> {
    let mut worst = 0f64;
    for d in DIMS {
        for _ in 0..cases {
            worst = worst.max(f(d, rng)?);
        }
    }
    Ok(worst)
}

fn round_trip(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    over_dims(cases, rng, |d, rng| {
        let p = spd_point(d, rng)?;
        let v = bounded_tangent(&p, 1.0, rng)?;
        let back = log_map(&p, &exp_map(&p, &v)?)?;
        Ok(norm(&back.sub(&v)?)? / (1.0 + norm(&v)?))
    })
}

fn speed(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    over_dims(cases, rng, |d, rng| {
        let p = spd_point(d, rng)?;
        let v = bounded_tangent(&p, 2.0, rng)?;
        Ok(relative_error(distance(&p, &exp_map(&p, &v)?)?, norm(&v)?))
    })
}

fn isometry(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    over_dims(cases, rng, |d, rng| {
        let p = spd_point(d, rng)?;
        let q = spd_point(d, rng)?;
        let u = unit_tangent(&p, rng)?;
        let v = unit_tangent(&p, rng)?;
        let before = inner(&p, &u, &v)?;
        let after = inner(&q, &parallel_transport(&p, &q, &u)?, &parallel_transport(&p, &q, &v)?)?;
        Ok((after - before).abs())
    })
}

fn product_distance(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    over_dims(cases, rng, |d, rng| {
        let (a, b) = (spd_point(d, rng)?, spd_point(d, rng)?);
        let (u, v) = (
            Point::euclidean(gaussian_vector(d, rng))?,
            Point::euclidean(gaussian_vector(d, rng))?,
        );
        let joint = distance(&Point::pair(&a, &u), &Point::pair(&b, &v))?;
        let parts = distance(&a, &b)?.hypot(distance(&u, &v)?);
        Ok(relative_error(joint, parts))
    })
}

fn triangle(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    over_dims(cases, rng, |d, rng| {
        let (p, q, r) = (spd_point(d, rng)?, spd_point(d, rng)?, spd_point(d, rng)?);
        Ok((distance(&p, &r)? - distance(&p, &q)? - distance(&q, &r)?).max(0.0))
    })
}

fn affine_invariance(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    over_dims(cases, rng, |d, rng| {
        let (s, a) = (random_spd(d, 10.0, rng), random_spd(d, 10.0, rng));
        let m = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5) + DMatrix::identity(d, d);
        let before = distance(&Point::spd(s.clone())?, &Point::spd(a.clone())?)?;
        let ms = Point::spd(sym(&(&m * s * m.transpose())))?;
        let ma = Point::spd(sym(&(&m * a * m.transpose())))?;
        Ok(relative_error(distance(&ms, &ma)?, before))
    })
}

fn small_dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=5)
}

fn frechet_equivalence(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0f64;
    for _ in 0..cases.min(50) {
        let d = small_dim(rng);
        let y = random_spd(d, 10.0, rng);
        let e = random_symmetric(d, rng);
        let a = frechet_log(&y, &e)?;
        let b = frechet_log_block(&y, &e)?;
        worst = worst.max((a - &b).norm() / b.norm().max(1e-300));
    }
    Ok(worst)
}

fn frechet_differences(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0f64;
    let h = 1e-5;
    for _ in 0..cases.min(50) {
        let d = small_dim(rng);
        let y = random_spd(d, 10.0, rng);
        let e = random_symmetric(d, rng);
        let fd = (spd_log(&(&y + &e * h))? - spd_log(&(&y - &e * h))?) / (2.0 * h);
        for candidate in [frechet_log(&y, &e)?, frechet_log_block(&y, &e)?] {
            worst = worst.max((candidate - &fd).norm() / fd.norm());
        }
    }
    Ok(worst)
}

fn karcher_entrywise(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0f64;
    for _ in 0..cases.min(20) {
        let d = small_dim(rng);
        let s = spd_point(d, rng)?;
        let a = random_spd(d, 10.0, rng);
        let v = random_tangent(&s, rng);
        let fast = karcher_rhess_apply(&s, &a, &v)?;
        let slow = karcher_rhess_apply_entrywise(&s, &a, &v)?;
        worst = worst.max(norm(&fast.sub(&slow)?)? / norm(&slow)?.max(1e-300));
    }
    Ok(worst)
}

fn robust(kind: RobustKind, d: usize, seed: u64) -> Result<RobustInstance> {
    let n = match kind {
        RobustKind::Karcher => 5,
        RobustKind::Mle => 3 * d,
    };
    RobustInstance::from_spec(&RobustSpec {
        kind,
        d,
        n,
        lambda: 1.0,
        seed,
        conditioning: 10.0,
        data: None,
    })
}

fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> Result<Point> {
    let w = DVector::from_fn(n, |_, _| rng.random::<f64>() + 0.05);
    let total = w.sum();
    Point::simplex(w / total)
}

/// Runs `f` on a robust instance of each kind and dimension with random
/// weights `x`, lower point `s` and unit tangent `v`.
fn over_robust(
    cases: usize,
    rng: &mut ChaCha8Rng,
    mut f: impl FnMut(&RobustInstance, &Point, &Point, &Tangent) -> Result<f64>,
) -> Result<f64> {
    let per = (cases / 10).max(1);
    let mut worst = 0f64;
    for kind in [RobustKind::Karcher, RobustKind::Mle] {
        for d in DIMS {
            let inst = robust(kind, d, rng.random())?;
            for _ in 0..per {
                let x = random_weights(inst.n(), rng)?;
                let s = spd_point(d, rng)?;
                let v = unit_tangent(&s, rng)?;
                worst = worst.max(f(&inst, &x, &s, &v)?);
            }
        }
    }
    Ok(worst)
}

fn lower_gradients(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    over_robust(cases, rng, |inst, x, s, v| {
        let g = inst.grad_y_g(x, s)?;
        let fd = fd_directional_derivative(|p| inst.lower_value(x, p), s, v, FD_STEP)?;
        let gf = inst.grad_y_f(x, s)?;
        let fdf = fd_directional_derivative(|p| inst.upper_value(x, p), s, v, FD_STEP)?;
        Ok(relative_error(fd, inner(s, &g, v)?).max(relative_error(fdf, inner(s, &gf, v)?)))
    })
}

fn lower_hessians(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    over_robust(cases, rng, |inst, x, s, v| {
        let hv = inst.hvp(x, s, v)?;
        let fd = fd_second_derivative(|p| inst.lower_value(x, p), s, v, FD2_STEP)?;
        Ok(relative_error(fd, inner(s, &hv, v)?))
    })
}

fn self_adjointness(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut extra = ChaCha8Rng::seed_from_u64(rng.random());
    over_robust(cases, rng, |inst, x, s, u| {
        let v = random_tangent(s, &mut extra);
        let h = inst.lower_hessian(x, s)?;
        let a = inner(s, &h.apply(u)?, &v)?;
        let b = inner(s, u, &h.apply(&v)?)?;
        Ok((a - b).abs() / (1.0 + norm(u)? * norm(&v)?))
    })
}

fn cross_adjointness(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut extra = ChaCha8Rng::seed_from_u64(rng.random());
    over_robust(cases, rng, |inst, x, s, _| adjointness_check(inst, x, s, 10, &mut extra))
}

/// Ratio of the CG error after `N` steps to `2√κ ρᴺ` times the initial error,
/// minus one, on random SPD operators.
fn cg_contraction(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let dim = 30;
    let base = Point::euclidean(DVector::zeros(dim))?;
    let mut worst = f64::NEG_INFINITY;
    for kappa in [2.0, 10.0, 100.0] {
        for _ in 0..(cases / 10).max(1) {
            let mut spectrum: Vec<f64> = (0..dim).map(|_| rng.random_range(1.0..=kappa)).collect();
            spectrum[0] = 1.0;
            spectrum[1] = kappa;
            let a = with_spectrum(&spectrum, rng);
            let op = |v: &Tangent| Tangent::from_vector(v.base(), &a * v.as_vector().expect("vector"));
            let rhs = Tangent::from_vector(&base, gaussian_vector(dim, rng))?;
            let exact = a.clone().cholesky().expect("SPD").solve(rhs.as_vector().expect("vector"));
            let v0 = Tangent::from_vector(&base, gaussian_vector(dim, rng))?;
            let initial = (v0.as_vector().expect("vector") - &exact).norm();
            for steps in 1..=20 {
                let out = tangent_cg(&op, &rhs, &v0, steps, 0.0)?;
                let err = (out.solution.as_vector().expect("vector") - &exact).norm();
                let bound = 2.0 * cg_error_bound(kappa, steps) * initial;
                worst = worst.max(err / bound - 1.0);
            }
        }
    }
    Ok(worst.max(0.0))
}

fn toy_at(toy: &ToyQuadratic, rng: &mut ChaCha8Rng, radius: f64) -> Result<(Point, Point)> {
    let mut xv = gaussian_vector(toy.upper_dim(), rng);
    let n = xv.norm();
    if n > radius {
        xv *= radius / n;
    }
    let y = toy.inner_solution(&xv)?;
    Ok((toy.upper_point(xv)?, toy.lower_point(y)?))
}

/// Excess of the Neumann hypergradient error over its bound, relative to the bound.
fn neumann_bias(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0f64;
    for i in 0..(cases / 5).max(2) {
        let toy = ToyQuadratic::random(3, 6, 1.0 + (i % 5) as f64 * 3.0, rng.random())?;
        let meta = toy.meta();
        let (x, y) = toy_at(&toy, rng, toy.radius())?;
        let exact = exact_hypergradient(&toy, &x, &y)?;
        for terms in [1, 5, 10, 20] {
            let mut cfg = EstimatorConfig::for_meta(&meta);
            cfg.neumann_terms = terms;
            let h = deterministic_neumann_hypergradient(&toy, &x, &y, &cfg)?;
            let bound = neumann_bias_bound(&meta, terms);
            let err = norm(&h.sub(&exact)?)?;
            worst = worst.max(if bound > 0.0 { err / bound - 1.0 } else { err });
        }
    }
    Ok(worst.max(0.0))
}

fn aid_exactness(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let toy = ToyQuadratic::random(4, 8, 10.0, rng.random())?;
    let cfg = EstimatorConfig {
        cg_steps: toy.lower_dim(),
        neumann_terms: 1,
        neumann_scale: toy.meta().neumann_scale(),
        cg_tol: 0.0,
    };
    let mut worst = 0f64;
    for _ in 0..cases.min(50) {
        let (x, y) = toy_at(&toy, rng, f64::INFINITY)?;
        let (h, _) = aid_hypergradient(&toy, &x, &y, &Tangent::zero(&y), &cfg)?;
        let truth = toy.grad_phi(x.as_vector().expect("vector"))?;
        worst = worst.max((h.as_vector().expect("vector") - truth).norm());
    }
    Ok(worst)
}

fn toy_closed_form(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0f64;
    for _ in 0..(cases / 10).max(1) {
        let toy = ToyQuadratic::random(3, 5, 8.0, rng.random())?;
        let xv = gaussian_vector(3, rng);
        let grad = toy.grad_phi(&xv)?;
        let h = FD_STEP;
        for i in 0..3 {
            let mut e = DVector::zeros(3);
            e[i] = h;
            let fd = (toy.phi(&(&xv + &e))? - toy.phi(&(&xv - &e))?) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / (1.0 + grad.norm()));
        }
    }
    Ok(worst)
}

/// Euclidean projection onto the simplex by enumerating supports: on a
/// support `S` the minimizer is `v_S − (Σ v_S − 1)/|S|`; the answer is the
/// closest feasible candidate.
pub fn simplex_projection_reference(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (members.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / members.len() as f64;
        let mut w = DVector::zeros(n);
        for &i in &members {
            w[i] = v[i] - shift;
        }
        if w.iter().any(|x| *x < 0.0) {
            continue;
        }
        let dist = (&w - v).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| dist < *b) {
            best = Some((dist, w));
        }
    }
    best.expect("the full support with clipping always has a feasible candidate").1
}

fn simplex_projection(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0f64;
    for _ in 0..cases * 10 {
        let n = rng.random_range(1..=6);
        let v = DVector::from_fn(n, |_, _| rng.random_range(-2.0..=2.0));
        let p = project_simplex(&v)?;
        if p.iter().any(|x| *x < 0.0) {
            return Ok(f64::INFINITY);
        }
        worst = worst.max((p.sum() - 1.0).abs()).max((&p - simplex_projection_reference(&v)).amax());
    }
    Ok(worst)
}

/// The geometric mean `A # B = A^{1/2}(A^{-1/2} B A^{-1/2})^{1/2}A^{1/2}`.
pub fn geometric_midpoint(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let half = spd_sqrt(a)?;
    let inv_half = spd_inv_sqrt(a)?;
    let middle = spd_sqrt(&sym(&(&inv_half * b * &inv_half)))?;
    Ok(sym(&(&half * middle * &half)))
}

fn karcher_midpoint(cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0f64;
    for i in 0..(cases / 10).max(2) {
        let d = DIMS[i % DIMS.len()];
        let (a, b) = (random_spd(d, 10.0, rng), random_spd(d, 10.0, rng));
        let inst = RobustInstance::new(RobustData::Karcher(vec![a.clone(), b.clone()]), 1.0)?;
        let x = inst.uniform_weights();
        let beta = 1.0 / inst.meta().l_g1;
        let s = lower_gd(&inst, &x, &inst.initial_lower(), 500, beta)?;
        let mid = geometric_midpoint(&a, &b)?;
        worst = worst.max((s.as_matrix().expect("SPD payload") - &mid).norm() / mid.norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_projection_examples() {
        let v = DVector::from_vec(vec![2.0, 0.0]);
        assert_eq!(simplex_projection_reference(&v), DVector::from_vec(vec![1.0, 0.0]));
        let v = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        assert!((simplex_projection_reference(&v) - &v).amax() < 1e-15);
    }

    #[test]
    fn fast_suite_passes() {
        for report in run_suite(true) {
            assert!(report.passed(), "{report:?}");
        }
    }
}
