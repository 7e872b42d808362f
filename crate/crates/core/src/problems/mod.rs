//! Problem instances: a Euclidean quadratic family with closed-form
//! hypergradient and the robust Karcher-mean and covariance-estimation problems.

mod data;
mod robust;
mod toy;

pub use data::{generate_gaussian_data, generate_spd_data};
pub use robust::{
    robust_cross_adjoint, robust_cross_apply, robust_lower_oracles, robust_upper_grad, InlineData,
    RobustData, RobustHessian, RobustInstance, RobustKind, RobustLower, RobustSpec,
};
pub use toy::{make_toy_quadratic, ToyQuadratic, DEFAULT_RADIUS};
