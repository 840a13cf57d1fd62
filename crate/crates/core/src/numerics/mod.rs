//! Numerical kernels shared by the model code: simplex minimization over
//! reparameterized boxes, finite-difference Hessians, Laplace and Simpson
//! log-integrals, and special functions.

mod deriv;
mod integrate;
mod optim;
mod special;

pub use deriv::{numeric_hessian, HESSIAN_REL_STEP};
pub use integrate::{
    adaptive_gauss_hermite_log_integral, gauss_hermite_rule, laplace, laplace_log_integral, quadrature_log_integral, quadrature_log_integral_fixed, LaplaceEstimate,
    LaplaceOptions, BOUNDARY_TOLERANCE,
};
pub use optim::{minimize, minimize_with, BoundFn, BoxSpec, MinimizeOptions, OptimResult, Transform};
pub use special::{digamma, log_gamma, trigamma};

pub(crate) use special::{ln_gamma_unchecked, logistic, logit, softplus};
