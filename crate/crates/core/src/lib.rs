//! Bayesian filtering, smoothing and forecasting for dynamic models whose
//! observations follow a two-parameter exponential family (normal, inverse
//! Gaussian, gamma, beta), with link functions on both the mean and the
//! precision.
//!
//! Each time step evolves partially specified state moments, matches them to
//! a conjugate prior by weighted least squares on the predictor moments,
//! applies the conjugate update, and maps the result back to the states by
//! linear Bayes.

pub mod error;
pub mod expfam;
pub mod filter;
pub mod forecast;
pub mod metrics;
pub mod modelspec;
pub mod numerics;

pub use error::{Error, Result};
pub use expfam::{ConjugateParams, Family, NaturalParams, PredictorMoments, SuffStats};
