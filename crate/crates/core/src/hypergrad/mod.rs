//! Hypergradient estimators for bilevel problems on manifolds.

mod cg;
mod estimators;
mod meta;
mod oracles;

pub use cg::{cg_error_bound, tangent_cg, CgOutcome};
pub use estimators::{
    adjointness_check, aid_hypergradient, dense_tangent_solve, deterministic_neumann_hypergradient,
    exact_hypergradient, neumann_bias_bound, neumann_inverse_apply, neumann_partial_sum,
    sampled_neumann_hypergradient, stochastic_hypergradient, EstimatorConfig,
};
pub use meta::SmoothnessMeta;
pub use oracles::{BilevelProblem, LinearOperator, StochasticOracles};
