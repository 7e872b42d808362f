use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use nalgebra::DVector;
use riebo::hypergrad::{BilevelProblem, EstimatorConfig, SmoothnessMeta};
use riebo::problems::{RobustInstance, RobustKind, RobustSpec, ToyQuadratic};
use riebo::solvers::{riebo, riesbo, robust_bilevel, Aborted, IterRecord, IterateTrace, SolverConfig};
use serde::Serialize;

use crate::config::{Experiment, RunConfig};

/// Outcome of one seed.
#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    #[serde(skip)]
    pub records: Vec<IterRecord>,
    pub error: Option<String>,
}

fn solver_config(cfg: &RunConfig, seed: u64, meta: &SmoothnessMeta, auto_alpha: f64) -> SolverConfig {
    SolverConfig {
        outer_steps: cfg.outer_steps,
        inner_steps: cfg.inner_steps,
        alpha: cfg.alpha.unwrap_or(auto_alpha),
        beta: cfg.beta.unwrap_or(1.0 / meta.l_g1),
        estimator: EstimatorConfig {
            cg_steps: cfg.cg_steps,
            neumann_terms: cfg.neumann_terms,
            neumann_scale: cfg.eta.unwrap_or_else(|| meta.neumann_scale()),
            ..EstimatorConfig::for_meta(meta)
        },
        seed,
        record_every: cfg.record_every,
        grad_tol: None,
        hypergrad: cfg.hypergrad,
    }
}

fn finish(seed: u64, solver: &SolverConfig, result: Result<IterateTrace, Aborted>) -> SeedRun {
    let (records, error) = match result {
        Ok(trace) => (trace.records, None),
        Err(aborted) => (aborted.trace.records, Some(aborted.error.to_string())),
    };
    SeedRun {
        seed,
        alpha: solver.alpha,
        beta: solver.beta,
        eta: solver.estimator.neumann_scale,
        records,
        error,
    }
}

fn setup_failure(seed: u64, error: riebo::Error) -> SeedRun {
    SeedRun {
        seed,
        alpha: f64::NAN,
        beta: f64::NAN,
        eta: f64::NAN,
        records: Vec::new(),
        error: Some(error.to_string()),
    }
}

/// Runs one seed. Each seed draws its own instance and solver randomness.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> SeedRun {
    match cfg.experiment {
        Experiment::ToyRiebo | Experiment::ToyRiesbo => {
            let toy = match ToyQuadratic::random(cfg.d, cfg.n, cfg.kappa, seed).and_then(|t| t.with_noise(cfg.sigma)) {
                Ok(t) => t,
                Err(e) => return setup_failure(seed, e),
            };
            let stochastic = cfg.experiment == Experiment::ToyRiesbo;
            let curvature = match toy.phi_curvature() {
                Ok(c) => c,
                Err(e) => return setup_failure(seed, e),
            };
            let auto_alpha = if stochastic { 0.1 } else { 1.0 } / curvature;
            let solver = solver_config(cfg, seed, &toy.meta(), auto_alpha);
            let start = toy
                .upper_point(DVector::from_element(cfg.d, 1.0))
                .and_then(|x| Ok((x, toy.lower_point(DVector::zeros(cfg.n))?)));
            let (x0, y0) = match start {
                Ok(p) => p,
                Err(e) => return setup_failure(seed, e),
            };
            let result = if stochastic {
                riesbo(&toy, &x0, &y0, &solver)
            } else {
                riebo(&toy, &x0, &y0, &solver)
            };
            finish(seed, &solver, result)
        }
        Experiment::RobustKarcher | Experiment::RobustMle => {
            let kind = if cfg.experiment == Experiment::RobustKarcher {
                RobustKind::Karcher
            } else {
                RobustKind::Mle
            };
            let spec = RobustSpec {
                kind,
                d: cfg.d,
                n: cfg.n,
                lambda: cfg.lambda,
                seed,
                conditioning: cfg.kappa,
                data: None,
            };
            let inst = match RobustInstance::from_spec(&spec) {
                Ok(i) => i,
                Err(e) => return setup_failure(seed, e),
            };
            let meta = inst.meta();
            let solver = solver_config(cfg, seed, &meta, 1.0 / (8.0 * meta.lipschitz_hypergradient()));
            let result = robust_bilevel(&inst, &inst.uniform_weights(), &inst.initial_lower(), &solver);
            finish(seed, &solver, result)
        }
        Experiment::Validate => unreachable!("validation runs no solver"),
    }
}

/// Worker count from `RIEBO_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var("RIEBO_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs every seed, one solver run per worker, and returns results in seed order.
pub fn run_all(cfg: &RunConfig, threads: usize) -> Vec<SeedRun> {
    let slots: Vec<Mutex<Option<SeedRun>>> = cfg.seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..threads.clamp(1, cfg.seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let run = run_seed(cfg, seed);
                *slots[i].lock().unwrap() = Some(run);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every seed is claimed by a worker"))
        .collect()
}
