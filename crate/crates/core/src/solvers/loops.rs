use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{HypergradMethod, SolverConfig};
use super::simplex::{gradient_mapping, project_simplex};
use super::trace::{Aborted, IterRecord, IterateTrace, SolverClock};
use crate::error::{Error, Result};
use crate::hypergrad::{
    aid_hypergradient, deterministic_neumann_hypergradient, sampled_neumann_hypergradient,
    stochastic_hypergradient, BilevelProblem, StochasticOracles,
};
use crate::manifold::{exp_map, norm, parallel_transport, Manifold, Point, Tangent};

/// What an observer sees after each outer step: the iterates the step was
/// computed at and the direction it used (hypergradient or gradient mapping).
pub struct StepView<'a> {
    pub k: usize,
    pub x: &'a Point,
    pub y: &'a Point,
    pub direction: &'a Tangent,
}

struct StepOutcome {
    y: Point,
    direction: Tangent,
    grad_norm: f64,
    x_next: Point,
}

/// `T` Riemannian gradient steps `y ← Exp_y(−β grad_y g(x, y))`.
pub fn lower_gd<P: BilevelProblem + ?Sized>(problem: &P, x: &Point, y0: &Point, steps: usize, beta: f64) -> Result<Point> {
    let mut y = y0.clone();
    for _ in 0..steps {
        let g = problem.grad_y_g(x, &y)?;
        y = exp_map(&y, &g.scale(-beta))?;
    }
    Ok(y)
}

fn lower_sgd(
    oracles: &dyn StochasticOracles,
    x: &Point,
    y0: &Point,
    steps: usize,
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Point> {
    let mut y = y0.clone();
    for _ in 0..steps {
        let g = oracles.sample_grad_y_g(x, &y, rng)?;
        y = exp_map(&y, &g.scale(-beta))?;
    }
    Ok(y)
}

fn revalidate(p: &Point) -> Result<()> {
    Point::new(p.manifold().clone(), p.payload().clone()).map(|_| ())
}

fn record<P: BilevelProblem + ?Sized>(problem: &P, k: usize, x: &Point, y: &Point, grad_norm: f64, elapsed_s: f64) -> Result<IterRecord> {
    revalidate(x)?;
    revalidate(y)?;
    let rec = IterRecord {
        k,
        elapsed_s,
        objective: problem.upper_value(x, y)?,
        grad_norm,
        inner_residual: norm(&problem.grad_y_g(x, y)?)?,
    };
    if !(rec.objective.is_finite() && rec.grad_norm.is_finite() && rec.inner_residual.is_finite()) {
        return Err(Error::NonFinite("trace record"));
    }
    Ok(rec)
}

fn drive<P, S>(
    problem: &P,
    x0: &Point,
    y0: &Point,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&StepView),
    mut step: S,
) -> std::result::Result<IterateTrace, Aborted>
where
    P: BilevelProblem + ?Sized,
    S: FnMut(usize, &Point, &Point) -> Result<StepOutcome>,
{
    let mut clock = SolverClock::start();
    let mut records = Vec::new();
    let mut x = x0.clone();
    let mut y = y0.clone();
    let abort = |records: Vec<IterRecord>, x: &Point, y: &Point, error: Error| Aborted {
        trace: IterateTrace {
            records,
            final_x: x.clone(),
            final_y: y.clone(),
        },
        error,
    };
    if let Err(e) = cfg.validate(None) {
        return Err(abort(records, &x, &y, e));
    }
    if x0.manifold() != &problem.upper_manifold() || y0.manifold() != &problem.lower_manifold() {
        let e = Error::dims(
            format!("({}, {})", problem.upper_manifold(), problem.lower_manifold()),
            format!("({}, {})", x0.manifold(), y0.manifold()),
        );
        return Err(abort(records, &x, &y, e));
    }
    for k in 0..cfg.outer_steps {
        let out = match step(k, &x, &y) {
            Ok(o) => o,
            Err(e) => return Err(abort(records, &x, &y, e)),
        };
        clock.pause();
        let last = k + 1 == cfg.outer_steps;
        let done = cfg.grad_tol.is_some_and(|tol| out.grad_norm <= tol);
        if k % cfg.record_every == 0 || last || done {
            match record(problem, k, &x, &out.y, out.grad_norm, clock.seconds()) {
                Ok(r) => records.push(r),
                Err(e) => return Err(abort(records, &x, &out.y, e)),
            }
        }
        observer(&StepView {
            k,
            x: &x,
            y: &out.y,
            direction: &out.direction,
        });
        clock.resume();
        y = out.y;
        if done {
            break;
        }
        x = out.x_next;
    }
    Ok(IterateTrace {
        records,
        final_x: x,
        final_y: y,
    })
}

/// Deterministic bilevel gradient descent: inner gradient steps, a
/// hypergradient estimate, and an exponential-map step on the upper variable.
pub fn riebo<P: BilevelProblem + ?Sized>(
    problem: &P,
    x0: &Point,
    y0: &Point,
    cfg: &SolverConfig,
) -> std::result::Result<IterateTrace, Aborted> {
    riebo_observed(problem, x0, y0, cfg, &mut |_| {})
}

/// [`riebo`] with a callback after every outer step (excluded from timing).
pub fn riebo_observed<P: BilevelProblem + ?Sized>(
    problem: &P,
    x0: &Point,
    y0: &Point,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&StepView),
) -> std::result::Result<IterateTrace, Aborted> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut previous: Option<(Point, Tangent)> = None;
    drive(problem, x0, y0, cfg, observer, |_, x, y_prev| {
        let y = lower_gd(problem, x, y_prev, cfg.inner_steps, cfg.beta)?;
        let h = match cfg.hypergrad {
            HypergradMethod::Cg => {
                let v0 = match &previous {
                    Some((yp, v)) => parallel_transport(yp, &y, v)?,
                    None => Tangent::zero(&y),
                };
                let (h, v) = aid_hypergradient(problem, x, &y, &v0, &cfg.estimator)?;
                previous = Some((y.clone(), v));
                h
            }
            HypergradMethod::NeumannExpected => deterministic_neumann_hypergradient(problem, x, &y, &cfg.estimator)?,
            HypergradMethod::NeumannSampled => sampled_neumann_hypergradient(problem, x, &y, &cfg.estimator, &mut rng)?,
        };
        let grad_norm = norm(&h)?;
        let x_next = exp_map(x, &h.scale(-cfg.alpha))?;
        Ok(StepOutcome {
            y,
            direction: h,
            grad_norm,
            x_next,
        })
    })
}

/// Stochastic bilevel method: sampled inner gradients and single-sample
/// Neumann hypergradients, all driven by one generator seeded from `cfg.seed`.
pub fn riesbo<P: BilevelProblem + ?Sized>(
    problem: &P,
    x0: &Point,
    y0: &Point,
    cfg: &SolverConfig,
) -> std::result::Result<IterateTrace, Aborted> {
    riesbo_observed(problem, x0, y0, cfg, &mut |_| {})
}

pub fn riesbo_observed<P: BilevelProblem + ?Sized>(
    problem: &P,
    x0: &Point,
    y0: &Point,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&StepView),
) -> std::result::Result<IterateTrace, Aborted> {
    let Some(oracles) = problem.stochastic() else {
        return Err(Aborted {
            trace: IterateTrace {
                records: Vec::new(),
                final_x: x0.clone(),
                final_y: y0.clone(),
            },
            error: Error::MissingSampler,
        });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    drive(problem, x0, y0, cfg, observer, |_, x, y_prev| {
        let y = lower_sgd(oracles, x, y_prev, cfg.inner_steps, cfg.beta, &mut rng)?;
        let h = stochastic_hypergradient(problem, x, &y, &cfg.estimator, &mut rng)?;
        let grad_norm = norm(&h)?;
        let x_next = exp_map(x, &h.scale(-cfg.alpha))?;
        Ok(StepOutcome {
            y,
            direction: h,
            grad_norm,
            x_next,
        })
    })
}

/// Projected bilevel method for an upper variable on the probability simplex:
/// `x⁺ = Π_Δ(x − α h_Φ)` with the Neumann partial-sum hypergradient. The
/// recorded gradient norm is that of the gradient mapping `(x − x⁺)/α`.
pub fn robust_bilevel<P: BilevelProblem + ?Sized>(
    problem: &P,
    x0: &Point,
    y0: &Point,
    cfg: &SolverConfig,
) -> std::result::Result<IterateTrace, Aborted> {
    robust_bilevel_observed(problem, x0, y0, cfg, &mut |_| {})
}

pub fn robust_bilevel_observed<P: BilevelProblem + ?Sized>(
    problem: &P,
    x0: &Point,
    y0: &Point,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&StepView),
) -> std::result::Result<IterateTrace, Aborted> {
    if !matches!(problem.upper_manifold(), Manifold::Simplex(_)) {
        return Err(Aborted {
            trace: IterateTrace {
                records: Vec::new(),
                final_x: x0.clone(),
                final_y: y0.clone(),
            },
            error: Error::invalid(format!("projected method needs a simplex upper variable, got {}", problem.upper_manifold())),
        });
    }
    drive(problem, x0, y0, cfg, observer, |_, x, y_prev| {
        let y = lower_gd(problem, x, y_prev, cfg.inner_steps, cfg.beta)?;
        let h = deterministic_neumann_hypergradient(problem, x, &y, &cfg.estimator)?;
        let xv: &DVector<f64> = x.vector()?;
        let next = project_simplex(&(xv - h.vector()? * cfg.alpha))?;
        let mapping = gradient_mapping(xv, &next, cfg.alpha)?;
        let grad_norm = mapping.norm();
        Ok(StepOutcome {
            y,
            direction: Tangent::from_vector(x, mapping)?,
            grad_norm,
            x_next: Point::simplex(next)?,
        })
    })
}
