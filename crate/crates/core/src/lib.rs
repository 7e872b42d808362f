//! Riemannian bilevel optimization: manifold primitives, SPD geometry,
//! hypergradient estimators, solvers and benchmark problems.

pub mod error;
pub mod hypergrad;
pub mod manifold;
pub mod problems;
pub mod random;
pub mod solvers;
pub mod spd;
pub mod validation;

pub use error::{Error, Result};
