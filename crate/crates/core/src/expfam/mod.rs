//! Two-parameter exponential family
//!
//! ```text
//! p(y | θ, φ) = a(y) exp{ φ [θ d1(y) + d2(y)] − ρ(θ, φ) }
//! ```
//!
//! with four members parameterized by mean `μ` and precision `φ`:
//!
//! | family           | θ(μ)      | d1(y)    | d2(y)       | var(y)           | links        |
//! |------------------|-----------|----------|-------------|------------------|--------------|
//! | normal           | μ         | y        | −y²/2       | 1/φ              | μ, log φ     |
//! | inverse gaussian | 1/(2μ²)   | −y       | −1/(2y)     | μ³/φ             | log μ, log φ |
//! | gamma            | 1/μ       | −y       | log y       | μ²/φ             | log μ, log φ |
//! | beta             | μ         | logit y  | log(1−y)    | μ(1−μ)/(1+φ)     | logit μ, log φ |
//!
//! Conjugate priors are written in the coordinates used by the moment maps:
//!
//! ```text
//! normal, beta   exp{ φ[θ τ1 + τ2] − τ0 ρ }
//! gamma          exp{ φ[−τ1/μ + τ2] − τ0 ρ }
//! inv. gaussian  exp{ −φ[τ1/(2μ²) + τ2/2] − τ0 ρ }
//! ```
//!
//! so one observation adds `(1, s1(y), s2(y))` to `τ` where `s(y)` is
//! `(y, −y²/2)`, `(logit y, log(1−y))`, `(y, log y)` and `(y, 1/y)`
//! respectively. Normalizing constants are taken with respect to `dθ dφ`.

mod kappa;
mod moments;

use std::fmt;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ln_gamma_unchecked, logistic, logit};

pub use kappa::{KappaEstimate, KappaMethod, LAPLACE_KAPPA_OPTIONS, PREDICTIVE_KAPPA_METHOD};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    InverseGaussian,
    Gamma,
    Beta,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Normal => "normal",
            Family::InverseGaussian => "inverse_gaussian",
            Family::Gamma => "gamma",
            Family::Beta => "beta",
        })
    }
}

/// Canonical parameter and precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    pub theta: f64,
    pub phi: f64,
}

/// Parameters `τ = (τ0, τ1, τ2)` of the conjugate prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugateParams {
    pub tau0: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl ConjugateParams {
    pub fn new(tau0: f64, tau1: f64, tau2: f64) -> Self {
        ConjugateParams { tau0, tau1, tau2 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.tau0, self.tau1, self.tau2]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        ConjugateParams::new(v[0], v[1], v[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuffStats {
    pub d1: f64,
    pub d2: f64,
}

/// Mean `f` and covariance `Q` of the linear predictor `η = (η1, η2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorMoments {
    pub f: Vector2<f64>,
    pub q: Matrix2<f64>,
}

impl PredictorMoments {
    pub fn new(f: Vector2<f64>, q: Matrix2<f64>) -> Self {
        PredictorMoments { f, q }
    }

    pub fn diagonal(f1: f64, f2: f64, q11: f64, q22: f64) -> Self {
        PredictorMoments {
            f: Vector2::new(f1, f2),
            q: Matrix2::new(q11, 0.0, 0.0, q22),
        }
    }
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Normal, Family::InverseGaussian, Family::Gamma, Family::Beta];

    pub fn support(&self) -> &'static str {
        match self {
            Family::Normal => "(-inf, inf)",
            Family::InverseGaussian | Family::Gamma => "(0, inf)",
            Family::Beta => "(0, 1)",
        }
    }

    pub fn in_support(&self, y: f64) -> bool {
        match self {
            Family::Normal => y.is_finite(),
            Family::InverseGaussian | Family::Gamma => y > 0.0 && y.is_finite(),
            Family::Beta => y > 0.0 && y < 1.0,
        }
    }

    pub fn check_support(&self, y: f64) -> Result<()> {
        if self.in_support(y) {
            Ok(())
        } else {
            Err(Error::Support {
                family: *self,
                y,
                support: self.support(),
            })
        }
    }

    fn check_params(&self, mu: f64, phi: f64) -> Result<()> {
        let mu_ok = match self {
            Family::Normal => mu.is_finite(),
            Family::InverseGaussian | Family::Gamma => mu > 0.0 && mu.is_finite(),
            Family::Beta => mu > 0.0 && mu < 1.0,
        };
        if mu_ok && phi > 0.0 && phi.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain {
                family: *self,
                what: format!("mu = {mu}, phi = {phi}"),
            })
        }
    }

    /// `(d1(y), d2(y))` of the density decomposition.
    pub fn suff_stats(&self, y: f64) -> Result<SuffStats> {
        self.check_support(y)?;
        let (d1, d2) = match self {
            Family::Normal => (y, -0.5 * y * y),
            Family::InverseGaussian => (-y, -0.5 / y),
            Family::Gamma => (-y, y.ln()),
            Family::Beta => (logit(y), (-y).ln_1p()),
        };
        Ok(SuffStats { d1, d2 })
    }

    /// `log a(y)`.
    pub fn log_base(&self, y: f64) -> Result<f64> {
        self.check_support(y)?;
        Ok(match self {
            Family::Normal => -0.5 * LN_2PI,
            Family::InverseGaussian => -0.5 * (LN_2PI + 3.0 * y.ln()),
            Family::Gamma => -y.ln(),
            Family::Beta => -(y.ln() + (-y).ln_1p()),
        })
    }

    /// Canonical parameter `θ(μ)`.
    pub fn theta(&self, mu: f64) -> f64 {
        match self {
            Family::Normal | Family::Beta => mu,
            Family::InverseGaussian => 0.5 / (mu * mu),
            Family::Gamma => 1.0 / mu,
        }
    }

    pub fn natural(&self, mu: f64, phi: f64) -> Result<NaturalParams> {
        self.check_params(mu, phi)?;
        Ok(NaturalParams {
            theta: self.theta(mu),
            phi,
        })
    }

    /// `ρ(θ(μ), φ)`, the log normalizer.
    pub fn rho(&self, mu: f64, phi: f64) -> Result<f64> {
        self.check_params(mu, phi)?;
        let r = self.rho_unchecked(mu, phi);
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::Numeric(format!("{self}: rho({mu}, {phi}) = {r}")))
        }
    }

    pub(crate) fn rho_unchecked(&self, mu: f64, phi: f64) -> f64 {
        match self {
            Family::Normal => 0.5 * (mu * mu * phi - phi.ln()),
            Family::InverseGaussian => -(phi / mu + 0.5 * phi.ln()),
            Family::Gamma => ln_gamma_unchecked(phi) - phi * (phi / mu).ln(),
            Family::Beta => {
                ln_gamma_unchecked(mu * phi) + ln_gamma_unchecked((1.0 - mu) * phi) - ln_gamma_unchecked(phi)
            }
        }
    }

    /// `log p(y | μ, φ)`.
    pub fn log_density(&self, y: f64, mu: f64, phi: f64) -> Result<f64> {
        let s = self.suff_stats(y)?;
        let rho = self.rho(mu, phi)?;
        let v = self.log_base(y)? + phi * (self.theta(mu) * s.d1 + s.d2) - rho;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("{self}: log density at y = {y} is {v}")))
        }
    }

    /// Variance of `y` given `(μ, φ)`.
    pub fn variance(&self, mu: f64, phi: f64) -> f64 {
        match self {
            Family::Normal => 1.0 / phi,
            Family::InverseGaussian => mu * mu * mu / phi,
            Family::Gamma => mu * mu / phi,
            Family::Beta => mu * (1.0 - mu) / (1.0 + phi),
        }
    }

    /// `(g1(μ), g2(φ))`.
    pub fn link(&self, mu: f64, phi: f64) -> Result<Vector2<f64>> {
        self.check_params(mu, phi)?;
        Ok(Vector2::new(self.mean_link(mu), phi.ln()))
    }

    pub(crate) fn mean_link(&self, mu: f64) -> f64 {
        match self {
            Family::Normal => mu,
            Family::InverseGaussian | Family::Gamma => mu.ln(),
            Family::Beta => logit(mu),
        }
    }

    pub(crate) fn mean_inv_link(&self, eta1: f64) -> f64 {
        match self {
            Family::Normal => eta1,
            Family::InverseGaussian | Family::Gamma => eta1.exp(),
            Family::Beta => logistic(eta1),
        }
    }

    /// Inverse of [`Family::link`], returning `(μ, φ)`.
    pub fn inv_link(&self, eta: &Vector2<f64>) -> Result<(f64, f64)> {
        if !eta[0].is_finite() || !eta[1].is_finite() {
            return Err(Error::Numeric(format!("{self}: inv_link of non-finite eta {eta:?}")));
        }
        let (mu, phi) = (self.mean_inv_link(eta[0]), eta[1].exp());
        self.check_params(mu, phi).map_err(|_| {
            Error::Numeric(format!("{self}: inv_link({}, {}) leaves the parameter space", eta[0], eta[1]))
        })?;
        Ok((mu, phi))
    }

    /// Increment `(s1(y), s2(y))` added to `(τ1, τ2)` by one observation.
    pub fn conjugate_stats(&self, y: f64) -> Result<(f64, f64)> {
        let s = self.suff_stats(y)?;
        Ok(match self {
            Family::Normal | Family::Beta => (s.d1, s.d2),
            Family::Gamma => (-s.d1, s.d2),
            Family::InverseGaussian => (-s.d1, -2.0 * s.d2),
        })
    }

    /// Posterior parameters after observing `y`.
    pub fn conjugate_update(&self, tau: &ConjugateParams, y: f64) -> Result<ConjugateParams> {
        if !self.admissible(tau) {
            return Err(Error::Inadmissible { family: *self, tau: *tau });
        }
        let (s1, s2) = self.conjugate_stats(y)?;
        let tau_star = ConjugateParams::new(tau.tau0 + 1.0, tau.tau1 + s1, tau.tau2 + s2);
        if !self.admissible(&tau_star) {
            return Err(Error::ConjugacyViolation {
                family: *self,
                tau: *tau,
                tau_star,
            });
        }
        Ok(tau_star)
    }
}
