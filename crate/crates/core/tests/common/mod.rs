//! Shared helpers for the integration tests: random admissible conjugate
//! parameters and a small independent 2-D integrator.

#![allow(dead_code)]

use edglm_core::{ConjugateParams, Family};
use proptest::prelude::*;
use rand::Rng;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Conjugate parameters from `(τ0, location, gap)`, where `gap > 0` is the
/// distance of `τ2` from the admissibility boundary per unit of `τ0`.
pub fn tau_from(family: Family, tau0: f64, loc: f64, gap: f64) -> ConjugateParams {
    match family {
        Family::Normal => {
            let tau1 = tau0 * loc;
            ConjugateParams::new(tau0, tau1, -tau1 * tau1 / (2.0 * tau0) - gap * tau0)
        }
        Family::InverseGaussian => {
            let tau1 = tau0 * loc.exp();
            ConjugateParams::new(tau0, tau1, tau0 * tau0 / tau1 + gap * tau0)
        }
        Family::Gamma => {
            let tau1 = tau0 * loc.exp();
            ConjugateParams::new(tau0, tau1, tau0 * loc - gap * tau0)
        }
        Family::Beta => ConjugateParams::new(tau0, tau0 * loc, -tau0 * softplus(loc) - gap * tau0),
    }
}

pub fn random_tau<R: Rng>(family: Family, rng: &mut R, tau0: (f64, f64)) -> ConjugateParams {
    loop {
        let t0 = rng.gen_range(tau0.0..tau0.1);
        let loc = match family {
            Family::Normal => rng.gen_range(-3.0..3.0),
            Family::Beta => rng.gen_range(-2.5..2.5),
            _ => rng.gen_range(-1.5..1.5),
        };
        let gap = (rng.gen_range(-4.0f64..1.0)).exp();
        let tau = tau_from(family, t0, loc, gap);
        if family.admissible(&tau) {
            return tau;
        }
    }
}

pub fn tau_strategy(family: Family) -> impl Strategy<Value = ConjugateParams> {
    let t0_lo = if family == Family::Normal { 1.5 } else { 0.5 };
    (t0_lo..80.0f64, -2.0..2.0f64, -4.0..1.0f64)
        .prop_map(move |(t0, loc, lg)| tau_from(family, t0, loc, lg.exp()))
        .prop_filter("admissible", move |t| family.admissible(t))
}

pub fn family_strategy() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Normal),
        Just(Family::InverseGaussian),
        Just(Family::Gamma),
        Just(Family::Beta)
    ]
}

/// A point of the family's support.
pub fn support_point<R: Rng>(family: Family, rng: &mut R) -> f64 {
    match family {
        Family::Normal => rng.gen_range(-20.0..20.0),
        Family::Gamma | Family::InverseGaussian => rng.gen_range(-6.0f64..4.0).exp(),
        Family::Beta => {
            let z: f64 = rng.gen_range(-10.0..10.0);
            1.0 / (1.0 + (-z).exp())
        }
    }
}

/// `log ∫∫ exp(f)` by the tensor trapezoid rule on a box; the rule is
/// spectrally accurate for integrands that vanish smoothly at the edges.
pub fn log_trapezoid_2d<F: Fn(f64, f64) -> f64>(f: F, x: (f64, f64), y: (f64, f64), n: usize) -> f64 {
    let hx = (x.1 - x.0) / n as f64;
    let hy = (y.1 - y.0) / n as f64;
    let mut vals = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..=n {
        for j in 0..=n {
            let w: f64 = if i == 0 || i == n { 0.5 } else { 1.0 } * if j == 0 || j == n { 0.5 } else { 1.0 };
            vals.push(f(x.0 + hx * i as f64, y.0 + hy * j as f64) + w.ln());
        }
    }
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + (hx * hy).ln()
}

/// `ln Γ(x)` by shifted Stirling series (independent of the crate).
pub fn ln_gamma(x: f64) -> f64 {
    let mut x = x;
    let mut shift = 0.0;
    while x < 15.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    shift + (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Student-t log-density of the normal-gamma predictive.
pub fn student_t_log_density(tau: &ConjugateParams, y: f64) -> f64 {
    let ConjugateParams { tau0, tau1, tau2 } = *tau;
    let alpha = 0.5 * (tau0 + 1.0);
    let b = -tau1 * tau1 / (2.0 * tau0) - tau2;
    let nu = 2.0 * alpha;
    let loc = tau1 / tau0;
    let scale2 = b * (tau0 + 1.0) / (alpha * tau0);
    let z = (y - loc) * (y - loc) / (nu * scale2);
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI * scale2).ln()
        - 0.5 * (nu + 1.0) * z.ln_1p()
}
