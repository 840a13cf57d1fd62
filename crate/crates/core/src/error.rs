use crate::expfam::{ConjugateParams, Family};

/// Errors produced by the model, filter and forecasting routines.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("{family}: y = {y} outside support {support}")]
    Support {
        family: Family,
        y: f64,
        support: &'static str,
    },
    #[error("{family}: invalid parameters ({what})")]
    Domain { family: Family, what: String },
    #[error("{family}: conjugate prior {tau:?} is not admissible")]
    Inadmissible { family: Family, tau: ConjugateParams },
    #[error("{family}: update of {tau:?} produced inadmissible {tau_star:?}")]
    ConjugacyViolation {
        family: Family,
        tau: ConjugateParams,
        tau_star: ConjugateParams,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("optimizer did not converge after {iterations} iterations (objective {objective})")]
    Optimizer { iterations: usize, objective: f64 },
    #[error("laplace approximation failed: {0}")]
    Laplace(String),
    #[error("quadrature box does not cover integrand mass (boundary fraction {boundary_fraction:e})")]
    Coverage { boundary_fraction: f64 },
    #[error("moment equating failed (objective {objective:e} at {best:?})")]
    Equating { objective: f64, best: ConjugateParams },
    #[error("singular matrix in {context}: {detail}")]
    Degeneracy { context: &'static str, detail: String },
    #[error("dimension mismatch: {0}")]
    Structural(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("forecast horizon: {0}")]
    Horizon(String),
    #[error("t = {t}, step `{step}`: {source}")]
    Step {
        t: usize,
        step: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, t: usize, step: &'static str) -> Error {
        Error::Step {
            t,
            step,
            source: Box::new(self),
        }
    }

    /// Innermost error, unwrapping any step context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
