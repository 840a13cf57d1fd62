//! Log-gamma, digamma and trigamma for positive real arguments.
//!
//! All three shift the argument up to `x >= 10` with the usual recurrences
//! and then apply the asymptotic (Stirling / Bernoulli) series, which is
//! accurate to a few ulps there.

use crate::error::{Error, Result};

const SHIFT_TO: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn check(x: f64, name: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{name}({x}): argument must be positive and finite")))
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    check(x, "log_gamma")?;
    Ok(ln_gamma_unchecked(x))
}

/// `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check(x, "digamma")?;
    Ok(digamma_unchecked(x))
}

/// `ψ'(x)` for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check(x, "trigamma")?;
    Ok(trigamma_unchecked(x))
}

/// `ln Γ(x)` without argument validation; returns NaN for `x <= 0`.
pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < SHIFT_TO {
        prod *= z;
        z += 1.0;
    }
    let zi = 1.0 / z;
    let zi2 = zi * zi;
    let series = zi
        * (1.0 / 12.0
            + zi2
                * (-1.0 / 360.0
                    + zi2
                        * (1.0 / 1260.0
                            + zi2 * (-1.0 / 1680.0 + zi2 * (1.0 / 1188.0 + zi2 * (-691.0 / 360_360.0))))));
    let stirling = (z - 0.5) * z.ln() - z + HALF_LN_2PI + series;
    stirling - prod.ln()
}

pub(crate) fn digamma_unchecked(x: f64) -> f64 {
    let mut z = x;
    let mut acc = 0.0;
    while z < SHIFT_TO {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let zi2 = 1.0 / (z * z);
    let series = zi2
        * (1.0 / 12.0
            - zi2
                * (1.0 / 120.0
                    - zi2
                        * (1.0 / 252.0
                            - zi2 * (1.0 / 240.0 - zi2 * (1.0 / 132.0 - zi2 * (691.0 / 32_760.0 - zi2 / 12.0))))));
    acc + z.ln() - 0.5 / z - series
}

pub(crate) fn trigamma_unchecked(x: f64) -> f64 {
    let mut z = x;
    let mut acc = 0.0;
    while z < SHIFT_TO {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let zi = 1.0 / z;
    let zi2 = zi * zi;
    let series = zi
        + zi2 / 2.0
        + zi * zi2
            * (1.0 / 6.0
                - zi2
                    * (1.0 / 30.0
                        - zi2
                            * (1.0 / 42.0
                                - zi2 * (1.0 / 30.0 - zi2 * (5.0 / 66.0 - zi2 * (691.0 / 2730.0 - zi2 * 7.0 / 6.0))))));
    acc + series
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn known_values() {
        assert!((log_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-13);
        assert!((trigamma(1.0).unwrap() - PI * PI / 6.0).abs() < 1e-13);
        assert!((digamma(1.0).unwrap() + 0.577_215_664_901_532_9).abs() < 1e-13);
        assert!((log_gamma(0.5).unwrap() - PI.sqrt().ln()).abs() < 1e-13);
        assert!(log_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(log_gamma(0.0).is_err());
        assert!(digamma(-1.0).is_err());
        assert!(trigamma(f64::NAN).is_err());
    }

    #[test]
    fn logistic_helpers_are_stable() {
        assert_eq!(logistic(800.0), 1.0);
        assert_eq!(logistic(-800.0), 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((logit(logistic(1.3)) - 1.3).abs() < 1e-12);
    }
}
