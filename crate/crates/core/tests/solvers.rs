use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riebo::hypergrad::{aid_hypergradient, BilevelProblem, EstimatorConfig};
use riebo::manifold::{distance, exp_map, parallel_transport, Point, Tangent};
use riebo::problems::{RobustData, RobustInstance, RobustKind, RobustSpec, ToyQuadratic};
use riebo::random::random_spd;
use riebo::solvers::*;

fn toy_config(toy: &ToyQuadratic, outer: usize) -> SolverConfig {
    let mut cfg = SolverConfig::for_meta(&toy.meta(), outer);
    cfg.alpha = 0.5 / toy.phi_curvature().unwrap();
    cfg.inner_steps = 5;
    cfg.estimator.cg_steps = 3;
    cfg
}

fn toy_start(toy: &ToyQuadratic) -> (Point, Point) {
    (
        Point::euclidean(DVector::from_element(toy.upper_dim(), 1.0)).unwrap(),
        Point::euclidean(DVector::zeros(toy.lower_dim())).unwrap(),
    )
}

fn robust(kind: RobustKind, d: usize, n: usize, seed: u64) -> RobustInstance {
    RobustInstance::from_spec(&RobustSpec {
        kind,
        d,
        n,
        lambda: 1.0,
        seed,
        conditioning: 10.0,
        data: None,
    })
    .unwrap()
}

fn robust_config(inst: &RobustInstance, outer: usize, inner: usize) -> SolverConfig {
    let meta = inst.meta();
    SolverConfig {
        outer_steps: outer,
        inner_steps: inner,
        alpha: 1e-2,
        beta: 1e-1,
        estimator: EstimatorConfig {
            cg_steps: 5,
            neumann_terms: 20,
            neumann_scale: meta.neumann_scale(),
            cg_tol: 0.0,
        },
        seed: 0,
        record_every: 1,
        grad_tol: None,
        hypergrad: HypergradMethod::NeumannExpected,
    }
}

#[test]
fn zero_outer_steps_return_the_start() {
    let toy = ToyQuadratic::random(2, 3, 4.0, 0).unwrap();
    let (x0, y0) = toy_start(&toy);
    let trace = riebo(&toy, &x0, &y0, &toy_config(&toy, 0)).unwrap();
    assert!(trace.records.is_empty());
    assert_eq!(trace.final_x, x0);
    assert_eq!(trace.final_y, y0);
}

#[test]
fn outer_steps_compose_the_building_blocks_exactly() {
    let toy = ToyQuadratic::random(3, 4, 5.0, 1).unwrap();
    let (x0, y0) = toy_start(&toy);
    let cfg = toy_config(&toy, 2);
    let trace = riebo(&toy, &x0, &y0, &cfg).unwrap();

    let y1 = lower_gd(&toy, &x0, &y0, cfg.inner_steps, cfg.beta).unwrap();
    let (h0, v0) = aid_hypergradient(&toy, &x0, &y1, &Tangent::zero(&y1), &cfg.estimator).unwrap();
    let x1 = exp_map(&x0, &h0.scale(-cfg.alpha)).unwrap();
    let y2 = lower_gd(&toy, &x1, &y1, cfg.inner_steps, cfg.beta).unwrap();
    let warm = parallel_transport(&y1, &y2, &v0).unwrap();
    let (h1, _) = aid_hypergradient(&toy, &x1, &y2, &warm, &cfg.estimator).unwrap();
    let x2 = exp_map(&x1, &h1.scale(-cfg.alpha)).unwrap();

    assert_eq!(trace.final_x, x2);
    assert_eq!(trace.final_y, y2);
    assert_eq!(trace.records[0].grad_norm, h0.as_vector().unwrap().norm());
    assert_eq!(trace.records[1].objective, toy.upper_value(&x1, &y2).unwrap());
}

#[test]
fn lower_gd_examples() {
    let toy = ToyQuadratic::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DVector::zeros(2), DMatrix::zeros(2, 2)).unwrap();
    let x = Point::euclidean(DVector::from_vec(vec![0.4, -1.3])).unwrap();
    let y0 = Point::euclidean(DVector::from_vec(vec![5.0, 2.0])).unwrap();
    let one = lower_gd(&toy, &x, &y0, 1, 1.0).unwrap();
    assert!((one.as_vector().unwrap() - x.as_vector().unwrap()).norm() <= 1e-15 * 6.0);
    assert_eq!(lower_gd(&toy, &x, &x, 7, 0.5).unwrap(), x);
}

#[test]
fn karcher_inner_loop_contracts_and_descends() {
    let inst = robust(RobustKind::Karcher, 4, 5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let w = DVector::from_vec(vec![0.1, 0.3, 0.2, 0.25, 0.15]);
    let x = Point::simplex(w).unwrap();
    let beta = 1.0 / inst.meta().l_g1;
    let y0 = Point::spd(random_spd(4, 20.0, &mut rng)).unwrap();
    let reference = lower_gd(&inst, &x, &y0, 3000, beta).unwrap();
    let mut y = y0;
    let mut dists = vec![distance(&y, &reference).unwrap()];
    let mut values = vec![inst.lower_value(&x, &y).unwrap()];
    for _ in 0..40 {
        y = lower_gd(&inst, &x, &y, 1, beta).unwrap();
        dists.push(distance(&y, &reference).unwrap());
        values.push(inst.lower_value(&x, &y).unwrap());
    }
    assert!(values.windows(2).all(|v| v[1] <= v[0] + 1e-12));
    let ratio = dists.windows(2).map(|d| d[1] / d[0]).fold(0f64, f64::max);
    assert!(ratio < 0.99, "worst contraction ratio {ratio}");
    assert!(dists[40] < 1e-3 * dists[0]);
}

#[test]
fn zero_noise_stochastic_run_matches_sampled_neumann_run() {
    let toy = ToyQuadratic::random(3, 5, 4.0, 2).unwrap();
    let (x0, y0) = toy_start(&toy);
    let mut cfg = toy_config(&toy, 30);
    cfg.hypergrad = HypergradMethod::NeumannSampled;
    cfg.seed = 17;
    let a = riesbo(&toy, &x0, &y0, &cfg).unwrap();
    let b = riebo(&toy, &x0, &y0, &cfg).unwrap();
    assert!(a.same_values(&b));
}

#[test]
fn stochastic_runs_are_reproducible() {
    let toy = ToyQuadratic::random(3, 5, 4.0, 2).unwrap().with_noise(0.1).unwrap();
    let (x0, y0) = toy_start(&toy);
    let mut cfg = toy_config(&toy, 50);
    cfg.seed = 5;
    let a = riesbo(&toy, &x0, &y0, &cfg).unwrap();
    let b = riesbo(&toy, &x0, &y0, &cfg).unwrap();
    assert!(a.same_values(&b));
    cfg.seed = 6;
    let c = riesbo(&toy, &x0, &y0, &cfg).unwrap();
    assert!(!a.same_values(&c));
}

#[test]
fn stochastic_run_needs_samplers() {
    let inst = robust(RobustKind::Karcher, 2, 3, 0);
    let cfg = robust_config(&inst, 3, 2);
    let err = riesbo(&inst, &inst.uniform_weights(), &inst.initial_lower(), &cfg).unwrap_err();
    assert_eq!(err.error, riebo::Error::MissingSampler);
    assert!(err.trace.records.is_empty());
}

#[test]
fn single_datum_has_zero_gradient_mapping() {
    let inst = robust(RobustKind::Karcher, 3, 1, 4);
    let cfg = robust_config(&inst, 5, 3);
    let trace = robust_bilevel(&inst, &inst.uniform_weights(), &inst.initial_lower(), &cfg).unwrap();
    assert_eq!(trace.records.len(), 5);
    assert!(trace.records.iter().all(|r| r.grad_norm == 0.0));
    assert_eq!(trace.final_x.as_vector().unwrap()[0], 1.0);
}

#[test]
fn identical_data_keep_uniform_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_spd(3, 5.0, &mut rng);
    let inst = RobustInstance::new(RobustData::Karcher(vec![a; 4]), 1.0).unwrap();
    let cfg = robust_config(&inst, 6, 10);
    let trace = robust_bilevel(&inst, &inst.uniform_weights(), &inst.initial_lower(), &cfg).unwrap();
    let w = trace.final_x.as_vector().unwrap();
    assert!(w.iter().all(|v| (v - 0.25).abs() <= 1e-12));
    assert!(trace.records.iter().all(|r| r.grad_norm <= 1e-10));
}

#[test]
fn projected_iterates_stay_feasible() {
    let inst = robust(RobustKind::Mle, 3, 12, 5);
    let mut cfg = robust_config(&inst, 40, 20);
    cfg.alpha = 0.05;
    let mut seen = 0;
    let trace = robust_bilevel_observed(&inst, &inst.uniform_weights(), &inst.initial_lower(), &cfg, &mut |step| {
        let w = step.x.as_vector().unwrap();
        assert!(w.iter().all(|v| *v >= 0.0));
        assert!((w.sum() - 1.0).abs() <= 1e-12);
        assert!(step.y.as_matrix().is_some());
        seen += 1;
    })
    .unwrap();
    assert_eq!(seen, 40);
    let w = trace.final_x.as_vector().unwrap();
    assert!((w.sum() - 1.0).abs() <= 1e-12 && w.iter().all(|v| *v >= 0.0));
    assert!(trace.records.windows(2).all(|r| r[0].k < r[1].k && r[0].elapsed_s <= r[1].elapsed_s));
}

#[test]
fn inactive_projection_gives_the_hypergradient() {
    let inst = robust(RobustKind::Karcher, 3, 4, 6);
    let mut cfg = robust_config(&inst, 1, 20);
    cfg.alpha = 1e-6;
    let x0 = inst.uniform_weights();
    let mut direction = None;
    robust_bilevel_observed(&inst, &x0, &inst.initial_lower(), &cfg, &mut |step| {
        direction = Some(step.direction.as_vector().unwrap().clone());
    })
    .unwrap();
    let y = lower_gd(&inst, &x0, &inst.initial_lower(), cfg.inner_steps, cfg.beta).unwrap();
    let h = riebo::hypergrad::deterministic_neumann_hypergradient(&inst, &x0, &y, &cfg.estimator).unwrap();
    let h = h.as_vector().unwrap();
    let centered = h.add_scalar(-h.mean());
    assert!((direction.unwrap() - &centered).norm() <= 1e-8 * centered.norm());
}

#[test]
fn projected_method_requires_a_simplex() {
    let toy = ToyQuadratic::random(2, 3, 2.0, 0).unwrap();
    let (x0, y0) = toy_start(&toy);
    assert!(robust_bilevel(&toy, &x0, &y0, &toy_config(&toy, 3)).is_err());
}

#[test]
fn recording_cadence_and_early_exit() {
    let toy = ToyQuadratic::random(3, 4, 3.0, 3).unwrap();
    let (x0, y0) = toy_start(&toy);
    let mut cfg = toy_config(&toy, 10);
    cfg.record_every = 4;
    let trace = riebo(&toy, &x0, &y0, &cfg).unwrap();
    let ks: Vec<usize> = trace.records.iter().map(|r| r.k).collect();
    assert_eq!(ks, vec![0, 4, 8, 9]);

    let mut cfg = toy_config(&toy, 10_000);
    cfg.alpha = 1.0 / toy.phi_curvature().unwrap();
    cfg.inner_steps = 30;
    cfg.estimator.cg_steps = 4;
    cfg.grad_tol = Some(1e-6);
    let trace = riebo(&toy, &x0, &y0, &cfg).unwrap();
    let last = trace.records.last().unwrap();
    assert!(last.grad_norm <= 1e-6);
    assert!(last.k < 9_999);
    assert_eq!(trace.records.len(), last.k + 1);
}

#[test]
fn divergent_inner_steps_abort_with_the_partial_trace() {
    let inst = robust(RobustKind::Mle, 3, 10, 1);
    let mut cfg = robust_config(&inst, 10, 5);
    cfg.beta = 1e4;
    let err = robust_bilevel(&inst, &inst.uniform_weights(), &inst.initial_lower(), &cfg).unwrap_err();
    assert!(err.trace.records.len() < 10);
    assert!(err.trace.records.iter().all(|r| r.objective.is_finite()));
    assert!(!err.to_string().is_empty());
}

#[test]
fn invalid_configs_are_rejected() {
    let toy = ToyQuadratic::random(2, 3, 2.0, 0).unwrap();
    let (x0, y0) = toy_start(&toy);
    let mut cfg = toy_config(&toy, 3);
    cfg.beta = -1.0;
    assert!(riebo(&toy, &x0, &y0, &cfg).is_err());
    let cfg = toy_config(&toy, 3);
    let wrong = Point::euclidean(DVector::zeros(7)).unwrap();
    assert!(riebo(&toy, &wrong, &y0, &cfg).is_err());
}
