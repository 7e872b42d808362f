//! Matrix functions and Riemannian calculus on symmetric positive definite matrices.

mod calculus;
mod eigen;
mod frechet;
mod karcher;
mod mle;

pub use calculus::{egrad_to_rgrad, ehess_to_rhess};
pub use eigen::{asymmetry, spd_inv_sqrt, spd_log, spd_sqrt, sym, sym_eigen, sym_exp, SymEigen, SYMMETRY_TOL};
pub use frechet::{frechet_log, frechet_log_block, frechet_log_eig, general_logm, log_divided_differences};
pub use karcher::{
    karcher_egrad, karcher_rhess_apply, karcher_rhess_apply_entrywise, KarcherLinearization,
    KarcherTerm,
};
pub use mle::{
    mle_egrad, mle_ehess_apply, mle_loss, moment_egrad, moment_ehess, moment_loss, moment_rgrad,
    moment_rhess,
};

pub(crate) use eigen::{eigen_of_sym, spd_inverse, SqrtPair};
