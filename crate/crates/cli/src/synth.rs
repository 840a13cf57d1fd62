//! In-model synthetic series: states follow `β_t = G β_{t−1} + ω_t` with
//! Gaussian `ω_t ~ N(0, W)` and `y_t` is drawn from the family at
//! `(μ_t, φ_t) = inv_link(F'β_t)`.

use edglm_core::modelspec::{BlockKind, Covariates, ModelSpec};
use edglm_core::{Error, Family};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, InverseGaussian, Normal, StandardNormal};

use crate::error::{CliError, CliResult};

/// Draws per time step before the generator gives up.
pub const MAX_REJECTIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub y: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
}

/// One draw from the family with mean `mu` and precision `phi`.
pub fn draw<R: Rng + ?Sized>(family: Family, mu: f64, phi: f64, rng: &mut R) -> Option<f64> {
    let y = match family {
        Family::Normal => Normal::new(mu, phi.recip().sqrt()).ok()?.sample(rng),
        Family::Gamma => Gamma::new(phi, mu / phi).ok()?.sample(rng),
        Family::InverseGaussian => InverseGaussian::new(mu, phi).ok()?.sample(rng),
        Family::Beta => Beta::new(mu * phi, (1.0 - mu) * phi).ok()?.sample(rng),
    };
    Some(y).filter(|&y| family.in_support(y))
}

/// Simulates `length` observations from `spec` starting at state `beta0`.
/// Blocks without an explicit `W` evolve without noise.
pub fn simulate(spec: &ModelSpec, beta0: &DVector<f64>, length: usize, seed: u64) -> CliResult<Simulation> {
    if length == 0 {
        return Err(CliError::Config("synth.length must be at least 1".into()));
    }
    if spec.blocks().any(|b| matches!(b.kind, BlockKind::Regression { .. })) {
        return Err(CliError::Config(
            "synth does not generate covariates; regression blocks are not supported".into(),
        ));
    }
    let family = spec.family;
    let no_data = Covariates::new();
    let design = spec.design_at(0, &no_data)?;
    let noise = psd_factor(&design.w);
    let p = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = beta0.clone();
    let mut out = Simulation {
        y: Vec::with_capacity(length),
        states: Vec::with_capacity(length),
        mu: Vec::with_capacity(length),
        phi: Vec::with_capacity(length),
    };
    for t in 1..=length {
        let mut accepted = None;
        for _ in 0..MAX_REJECTIONS {
            let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let beta = &design.g * &state + &noise * z;
            let eta = design.f.transpose() * &beta;
            let Ok((mu, phi)) = family.inv_link(&nalgebra::Vector2::new(eta[0], eta[1])) else {
                continue;
            };
            if !(mu.is_finite() && phi.is_finite() && phi > 0.0) || (family == Family::Beta && !(mu > 0.0 && mu < 1.0)) {
                continue;
            }
            if let Some(y) = draw(family, mu, phi, &mut rng) {
                accepted = Some((beta, mu, phi, y));
                break;
            }
        }
        let (beta, mu, phi, y) = accepted.ok_or_else(|| Error::Step {
            t,
            step: "synth",
            source: Box::new(Error::Numeric(format!(
                "no admissible draw after {MAX_REJECTIONS} attempts"
            ))),
        })?;
        out.y.push(y);
        out.states.push(beta.clone());
        out.mu.push(mu);
        out.phi.push(phi);
        state = beta;
    }
    Ok(out)
}

/// `L` with `L L' = W` for symmetric positive semi-definite `W`.
fn psd_factor(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w.clone());
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}
