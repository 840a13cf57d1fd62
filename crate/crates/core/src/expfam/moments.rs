//! Mode/curvature approximations `h(τ)`, `H(τ)` of the linear-predictor
//! moments under the conjugate prior, the admissible region of `τ`, and the
//! partial inverse used to seed moment equating.

use nalgebra::{Matrix2, Vector2};

use super::{ConjugateParams, Family, PredictorMoments};
use crate::error::{Error, Result};
use crate::numerics::{logistic, softplus};

/// Margin applied when projecting an initial `τ` into the admissible region.
pub const PROJECTION_MARGIN: f64 = 1e-6;

impl Family {
    /// `(h1, h2, H11, H22)`; may be non-finite or non-positive outside the
    /// admissible region.
    pub(crate) fn moment_components(&self, tau: &ConjugateParams) -> [f64; 4] {
        let ConjugateParams { tau0, tau1, tau2 } = *tau;
        match self {
            Family::Normal => {
                let shape = 0.5 * (tau0 + 1.0);
                let rate = -tau1 * tau1 / (2.0 * tau0) - tau2;
                [tau1 / tau0, (shape / rate).ln(), rate / (tau0 * (shape - 1.0)), 2.0 / (tau0 + 1.0)]
            }
            Family::InverseGaussian => [
                (tau1 / tau0).ln(),
                (tau0 * tau1 / (tau1 * tau2 - tau0 * tau0)).ln(),
                tau1 * tau2 / (tau0 * tau0 * tau0) - 1.0 / tau0,
                2.0 / tau0,
            ],
            Family::Gamma => {
                let h1 = (tau1 / tau0).ln();
                let phi = tau0 / (2.0 * (tau0 * h1 - tau2));
                [h1, phi.ln(), 1.0 / (tau0 * phi), 2.0 / tau0]
            }
            Family::Beta => {
                let h1 = tau1 / tau0;
                let mu = logistic(h1);
                // log(1 - μ) = -softplus(h1)
                let phi = tau0 / (2.0 * (-tau0 * softplus(h1) - tau2));
                [h1, phi.ln(), 1.0 / (tau0 * mu * (1.0 - mu) * phi), 2.0 / tau0]
            }
        }
    }

    /// Whether `τ` indexes a conjugate prior with finite moments and
    /// strictly positive approximate variances.
    pub fn admissible(&self, tau: &ConjugateParams) -> bool {
        let ConjugateParams { tau0, tau1, tau2 } = *tau;
        if !(tau0.is_finite() && tau1.is_finite() && tau2.is_finite()) {
            return false;
        }
        let region = match self {
            Family::Normal => tau0 > 1.0 && tau2 < -tau1 * tau1 / (2.0 * tau0),
            Family::InverseGaussian => tau0 > 0.0 && tau1 > 0.0 && tau1 * tau2 > tau0 * tau0,
            Family::Gamma => tau0 > 0.0 && tau1 > 0.0 && tau2 < tau0 * (tau1 / tau0).ln(),
            Family::Beta => tau0 > 0.0 && tau2 < -tau0 * softplus(tau1 / tau0),
        };
        if !region {
            return false;
        }
        let [h1, h2, v1, v2] = self.moment_components(tau);
        h1.is_finite() && h2.is_finite() && v1.is_finite() && v2.is_finite() && v1 > 0.0 && v2 > 0.0
    }

    /// `(h(τ), H(τ))`: approximate mean and (diagonal) covariance of `η`
    /// under the conjugate prior.
    pub fn prior_moment_map(&self, tau: &ConjugateParams) -> Result<PredictorMoments> {
        if !self.admissible(tau) {
            return Err(Error::Inadmissible { family: *self, tau: *tau });
        }
        let [h1, h2, v1, v2] = self.moment_components(tau);
        Ok(PredictorMoments {
            f: Vector2::new(h1, h2),
            q: Matrix2::new(v1, 0.0, 0.0, v2),
        })
    }

    /// Solves the three exactly invertible equations `H22 = q22`, `h1 = f1`,
    /// `h2 = f2` for `τ`, projecting `τ0` into its admissible range.
    ///
    /// Exact whenever `(f, q22)` lies in the image of the moment map.
    pub fn moment_inverse(&self, f1: f64, f2: f64, q22: f64) -> Result<ConjugateParams> {
        if !(f1.is_finite() && f2.is_finite() && q22 > 0.0 && q22.is_finite()) {
            return Err(Error::Domain {
                family: *self,
                what: format!("cannot invert moments f = ({f1}, {f2}), q22 = {q22}"),
            });
        }
        let phi = f2.exp();
        let tau = match self {
            Family::Normal => {
                let tau0 = (2.0 / q22 - 1.0).max(1.0 + PROJECTION_MARGIN);
                let tau1 = f1 * tau0;
                let rate = 0.5 * (tau0 + 1.0) / phi;
                ConjugateParams::new(tau0, tau1, -tau1 * tau1 / (2.0 * tau0) - rate)
            }
            Family::InverseGaussian => {
                let tau0 = (2.0 / q22).max(PROJECTION_MARGIN);
                let tau1 = tau0 * f1.exp();
                ConjugateParams::new(tau0, tau1, tau0 / phi + tau0 * tau0 / tau1)
            }
            Family::Gamma => {
                let tau0 = (2.0 / q22).max(PROJECTION_MARGIN);
                ConjugateParams::new(tau0, tau0 * f1.exp(), tau0 * f1 - tau0 / (2.0 * phi))
            }
            Family::Beta => {
                let tau0 = (2.0 / q22).max(PROJECTION_MARGIN);
                ConjugateParams::new(tau0, tau0 * f1, -tau0 * softplus(f1) - tau0 / (2.0 * phi))
            }
        };
        if self.admissible(&tau) {
            Ok(tau)
        } else {
            Err(Error::Domain {
                family: *self,
                what: format!("moment inverse {tau:?} is not admissible"),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normal_map_examples() {
        let pm = Family::Normal.prior_moment_map(&ConjugateParams::new(3.0, 0.0, -2.0)).unwrap();
        assert!(close(pm.f[0], 0.0, 1e-15) && close(pm.f[1], 0.0, 1e-15));
        assert!(close(pm.q[(0, 0)], 2.0 / 3.0, 1e-15) && close(pm.q[(1, 1)], 0.5, 1e-15));
        assert_eq!(pm.q[(0, 1)], 0.0);
        let pm = Family::Normal.prior_moment_map(&ConjugateParams::new(3.0, 3.0, -3.5)).unwrap();
        assert!(close(pm.f[0], 1.0, 1e-15) && close(pm.f[1], 0.0, 1e-15));
        assert!(close(pm.q[(0, 0)], 2.0 / 3.0, 1e-15) && close(pm.q[(1, 1)], 0.5, 1e-15));
    }

    #[test]
    fn beta_map_example() {
        let pm = Family::Beta
            .prior_moment_map(&ConjugateParams::new(4.0, 0.0, -3.772_588_722_239_781))
            .unwrap();
        assert!(close(pm.f[0], 0.0, 1e-15));
        assert!(close(pm.f[1], 2f64.ln(), 1e-12));
        assert!(close(pm.q[(0, 0)], 0.5, 1e-12) && close(pm.q[(1, 1)], 0.5, 1e-15));
    }

    #[test]
    fn admissibility_examples() {
        assert!(Family::Normal.admissible(&ConjugateParams::new(2.0, 0.0, -1.0)));
        assert!(!Family::Normal.admissible(&ConjugateParams::new(0.5, 0.0, -1.0)));
        assert!(!Family::Beta.admissible(&ConjugateParams::new(4.0, 0.0, 1.0)));
        assert!(Family::Gamma.admissible(&ConjugateParams::new(1.0, 1.0, -1.0)));
        assert!(!Family::Gamma.admissible(&ConjugateParams::new(2.0, 0.0, -1.0)));
        assert!(Family::InverseGaussian.admissible(&ConjugateParams::new(2.0, 2.0, 3.0)));
        assert!(!Family::InverseGaussian.admissible(&ConjugateParams::new(2.0, 2.0, 1.5)));
        assert!(!Family::Beta.admissible(&ConjugateParams::new(f64::NAN, 0.0, -10.0)));
    }

    #[test]
    fn inadmissible_map_is_an_error() {
        assert!(matches!(
            Family::Gamma.prior_moment_map(&ConjugateParams::new(2.0, 0.0, -1.0)),
            Err(Error::Inadmissible { .. })
        ));
    }

    #[test]
    fn inverse_recovers_consistent_moments() {
        let cases = [
            (Family::Normal, ConjugateParams::new(3.0, 3.0, -3.5)),
            (Family::InverseGaussian, ConjugateParams::new(5.0, 10.0, 4.0)),
            (Family::Gamma, ConjugateParams::new(8.0, 4.0, -9.0)),
            (Family::Beta, ConjugateParams::new(20.0, -5.0, -14.0)),
        ];
        for (fam, tau) in cases {
            let pm = fam.prior_moment_map(&tau).unwrap();
            let back = fam.moment_inverse(pm.f[0], pm.f[1], pm.q[(1, 1)]).unwrap();
            for (a, b) in tau.as_array().iter().zip(back.as_array()) {
                assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{fam}: {tau:?} vs {back:?}");
            }
        }
    }
}
