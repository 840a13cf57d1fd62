//! Normalizing constants `κ(τ)` of the conjugate priors.
//!
//! `κ(τ)⁻¹ = ∫∫ exp{prior kernel} dθ dφ`. The normal prior is normal-gamma
//! and has a closed form; the others are integrated in the linear-predictor
//! coordinates `η = (g1(μ), log φ)` with the Jacobian of `(θ, φ) → η`
//! folded into the integrand, and approximated by Laplace's method,
//! optionally refined by adaptive Gauss–Hermite quadrature around the
//! Laplace mode.

use super::{ConjugateParams, Family};
use crate::error::{Error, Result};
use crate::numerics::{
    adaptive_gauss_hermite_log_integral, laplace, ln_gamma_unchecked, logistic, softplus, LaplaceOptions,
    MinimizeOptions,
};

pub const LAPLACE_KAPPA_OPTIONS: LaplaceOptions = LaplaceOptions {
    minimize: MinimizeOptions {
        tol: 1e-13,
        xtol: 1e-9,
        max_iter: 2000,
        initial_step: 0.05,
        restarts: 1,
    },
    hessian_step: None,
};

/// How the normalizing integral is approximated for the non-normal families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaMethod {
    /// Second-order Laplace approximation at the mode.
    Laplace,
    /// Laplace mode and curvature followed by an `n × n` Gauss–Hermite rule
    /// in the whitened coordinates (`n = 1` is the Laplace value).
    GaussHermite(usize),
}

/// Method used for predictive densities, where the ratio `κ(τ)/κ(τ*)` must
/// integrate to one over `y` much more tightly than the `O(1/τ0)` Laplace
/// error allows.
pub const PREDICTIVE_KAPPA_METHOD: KappaMethod = KappaMethod::GaussHermite(16);

#[derive(Debug, Clone, Copy)]
pub struct KappaEstimate {
    pub log_kappa: f64,
    /// Mode of the η-integrand (absent for the closed-form normal case).
    pub mode: Option<[f64; 2]>,
}

impl Family {
    /// Log of the conjugate prior integrand in `η` coordinates, Jacobian
    /// included. Returns `-inf` where the integrand underflows or the
    /// parameters leave their domain.
    pub fn log_prior_kernel(&self, tau: &ConjugateParams, eta: &[f64]) -> f64 {
        let ConjugateParams { tau0, tau1, tau2 } = *tau;
        let (e1, e2) = (eta[0], eta[1]);
        let phi = e2.exp();
        if !(phi > 0.0 && phi.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let v = match self {
            Family::Normal => {
                let mu = e1;
                phi * (mu * tau1 + tau2) - tau0 * 0.5 * (mu * mu * phi - e2) + e2
            }
            Family::Beta => {
                let mu = logistic(e1);
                if !(mu > 0.0 && mu < 1.0) {
                    return f64::NEG_INFINITY;
                }
                let rho =
                    ln_gamma_unchecked(mu * phi) + ln_gamma_unchecked((1.0 - mu) * phi) - ln_gamma_unchecked(phi);
                let log_jac = -softplus(-e1) - softplus(e1) + e2;
                phi * (mu * tau1 + tau2) - tau0 * rho + log_jac
            }
            Family::Gamma => {
                let inv_mu = (-e1).exp();
                let rho = ln_gamma_unchecked(phi) - phi * (e2 - e1);
                phi * (tau2 - tau1 * inv_mu) - tau0 * rho - e1 + e2
            }
            Family::InverseGaussian => {
                let inv_mu = (-e1).exp();
                let rho = -(phi * inv_mu + 0.5 * e2);
                -phi * (0.5 * tau1 * inv_mu * inv_mu + 0.5 * tau2) - tau0 * rho - 2.0 * e1 + e2
            }
        };
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// `log κ(τ)` by Laplace's method (closed form for the normal family).
    pub fn log_kappa(&self, tau: &ConjugateParams) -> Result<f64> {
        self.log_kappa_with(tau, KappaMethod::Laplace)
    }

    pub fn log_kappa_with(&self, tau: &ConjugateParams, method: KappaMethod) -> Result<f64> {
        self.log_kappa_from(tau, None, &LAPLACE_KAPPA_OPTIONS, method).map(|k| k.log_kappa)
    }

    /// `log κ(τ)` with an optional starting point for the mode search.
    pub fn log_kappa_from(
        &self,
        tau: &ConjugateParams,
        init: Option<[f64; 2]>,
        opts: &LaplaceOptions,
        method: KappaMethod,
    ) -> Result<KappaEstimate> {
        if !self.admissible(tau) {
            return Err(Error::Inadmissible { family: *self, tau: *tau });
        }
        if let Family::Normal = self {
            let ConjugateParams { tau0, tau1, tau2 } = *tau;
            let shape = 0.5 * (tau0 + 1.0);
            let rate = -tau1 * tau1 / (2.0 * tau0) - tau2;
            let log_integral =
                0.5 * (2.0 * std::f64::consts::PI / tau0).ln() + ln_gamma_unchecked(shape) - shape * rate.ln();
            return Ok(KappaEstimate {
                log_kappa: -log_integral,
                mode: None,
            });
        }
        let start = match init {
            Some(p) => p,
            None => {
                let [h1, h2, _, _] = self.moment_components(tau);
                [h1, h2]
            }
        };
        let kernel = |eta: &[f64]| self.log_prior_kernel(tau, eta);
        let est = laplace(kernel, &start, opts)?;
        let log_integral = match method {
            KappaMethod::Laplace => est.log_integral,
            KappaMethod::GaussHermite(n) => adaptive_gauss_hermite_log_integral(kernel, &est, n)?,
        };
        Ok(KappaEstimate {
            log_kappa: -log_integral,
            mode: Some([est.mode[0], est.mode[1]]),
        })
    }
}
