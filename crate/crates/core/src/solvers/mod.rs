//! Outer solver loops for bilevel problems.

mod config;
mod loops;
mod simplex;
mod trace;

pub use config::{HypergradMethod, SolverConfig};
pub use loops::{
    lower_gd, riebo, riebo_observed, riesbo, riesbo_observed, robust_bilevel, robust_bilevel_observed,
    StepView,
};
pub use simplex::{gradient_mapping, project_simplex};
pub use trace::{Aborted, IterRecord, IterateTrace};
