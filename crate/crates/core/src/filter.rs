//! Extended conjugate updating.
//!
//! Each step evolves the state moments, equates the implied linear-predictor
//! moments `(f, Q)` to a conjugate prior `τ`, applies the conjugate update for
//! the observation, and propagates the posterior predictor moments
//! `(f*, Q*)` back to the state by linear Bayes:
//!
//! ```text
//! a = G m,   R = D G C G' D + W,   f = F'a,   Q = F'RF
//! τ  = argmin Δ(τ; f, Q)' Ω Δ(τ; f, Q)
//! τ* = τ + (1, s(y)),   (f*, Q*) = (h(τ*), H(τ*))
//! m = a + R F Q⁻¹ (f* − f),   C = R + R F Q⁻¹ (Q* − Q) Q⁻¹ F'R
//! ```
//!
//! A backward pass gives the smoothed moments.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, SymmetricEigen, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::expfam::{ConjugateParams, Family, PredictorMoments};
use crate::modelspec::{Covariates, DesignAt, ModelSpec};
use crate::numerics::{minimize_with, softplus, BoxSpec, MinimizeOptions, Transform};

/// Threshold on the determinant of the diagonal-scaled matrix below which
/// jitter is added.
pub const JITTER_DET_THRESHOLD: f64 = 1e-12;
/// Jitter added to the diagonal, relative to the mean diagonal entry.
pub const JITTER: f64 = 1e-10;

/// Weight matrix `Ω` of the moment-equating quadratic form.
pub type Weights = Matrix4<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct StateMoments {
    pub m: DVector<f64>,
    pub c: DMatrix<f64>,
}

impl StateMoments {
    pub fn new(m: DVector<f64>, c: DMatrix<f64>) -> Result<Self> {
        if c.nrows() != m.len() || c.ncols() != m.len() {
            return Err(Error::Structural(format!(
                "state mean has {} entries but covariance is {}x{}",
                m.len(),
                c.nrows(),
                c.ncols()
            )));
        }
        if m.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("initial state moments must be finite".into()));
        }
        if (&c - c.transpose()).amax() > 1e-12 * c.amax().max(1.0) || c.diagonal().iter().any(|&d| d < 0.0) {
            return Err(Error::Config("initial state covariance must be symmetric with a non-negative diagonal".into()));
        }
        Ok(StateMoments { m, c })
    }

    /// `m = 0`, `C = I`.
    pub fn vague(p: usize) -> Self {
        StateMoments {
            m: DVector::zeros(p),
            c: DMatrix::identity(p, p),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorStateMoments {
    pub a: DVector<f64>,
    pub r: DMatrix<f64>,
}

/// Everything computed at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based time index (data row + 1).
    pub t: usize,
    pub y: f64,
    pub a: DVector<f64>,
    pub r: DMatrix<f64>,
    /// Evolution matrix used to reach this step (needed by smoothing).
    pub g: DMatrix<f64>,
    pub f: Vector2<f64>,
    pub q: Matrix2<f64>,
    pub tau: ConjugateParams,
    /// Value of the equating objective at `tau`.
    pub equating_objective: f64,
    pub tau_star: ConjugateParams,
    pub f_star: Vector2<f64>,
    pub q_star: Matrix2<f64>,
    pub m: DVector<f64>,
    pub c: DMatrix<f64>,
}

impl StepRecord {
    pub fn state(&self) -> StateMoments {
        StateMoments {
            m: self.m.clone(),
            c: self.c.clone(),
        }
    }

    pub fn prior_moments(&self) -> PredictorMoments {
        PredictorMoments::new(self.f, self.q)
    }
}

#[derive(Debug, Clone)]
pub struct FilterResult {
    pub steps: Vec<StepRecord>,
    pub smoothed: Option<Vec<StateMoments>>,
    pub model: Arc<ModelSpec>,
    pub weights: Weights,
    /// Number of leading rows consumed to populate lagged regressors.
    pub warm_up: usize,
}

impl FilterResult {
    pub fn last_state(&self) -> StateMoments {
        self.steps.last().expect("filter result has at least one step").state()
    }

    /// Runs [`smooth`] and stores the result.
    pub fn with_smoothing(mut self) -> Result<Self> {
        self.smoothed = Some(smooth(&self)?);
        Ok(self)
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Whether `m` needs diagonal jitter before inversion: Cholesky fails, or the
/// determinant of `diag(m)^{-1/2} m diag(m)^{-1/2}` is below
/// [`JITTER_DET_THRESHOLD`].
fn needs_jitter(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    if d.iter().any(|&v| !(v > 0.0)) {
        return true;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (d[i] * d[j]).sqrt());
    match scaled.cholesky() {
        Some(ch) => {
            let det: f64 = ch.l_dirty().diagonal().iter().map(|v| v * v).product();
            det < JITTER_DET_THRESHOLD
        }
        None => true,
    }
}

/// Adds `JITTER × mean diagonal` to the diagonal when [`needs_jitter`] says so.
pub fn stabilize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if !needs_jitter(m) {
        return m.clone();
    }
    let n = m.nrows();
    let mean_diag = m.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n.max(1) as f64;
    let eps = if mean_diag > 0.0 { JITTER * mean_diag } else { JITTER };
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] += eps;
    }
    out
}

pub(crate) fn stabilize2(q: &Matrix2<f64>) -> Matrix2<f64> {
    let d = stabilize(&DMatrix::from_column_slice(2, 2, q.as_slice()));
    Matrix2::from_column_slice(d.as_slice())
}

fn check_design(p: usize, design: &DesignAt) -> Result<()> {
    let ok = design.f.nrows() == p
        && design.f.ncols() == 2
        && design.g.nrows() == p
        && design.g.ncols() == p
        && design.d.len() == p
        && design.w.nrows() == p
        && design.w.ncols() == p;
    if ok {
        Ok(())
    } else {
        Err(Error::Structural(format!(
            "state has dimension {p} but design has F {}x{}, G {}x{}, D {}, W {}x{}",
            design.f.nrows(),
            design.f.ncols(),
            design.g.nrows(),
            design.g.ncols(),
            design.d.len(),
            design.w.nrows(),
            design.w.ncols()
        )))
    }
}

/// `R = D G C G' D + W` from `C`, shared with forecasting.
pub(crate) fn evolve_covariance(c: &DMatrix<f64>, design: &DesignAt) -> DMatrix<f64> {
    let gcg = &design.g * c * design.g.transpose();
    let mut r = DMatrix::from_fn(gcg.nrows(), gcg.ncols(), |i, j| design.d[i] * gcg[(i, j)] * design.d[j]);
    r += &design.w;
    symmetrize(&mut r);
    r
}

/// `f = F'a`, `Q = F'RF` (symmetrized and stabilized).
pub(crate) fn predictor_moments(a: &DVector<f64>, r: &DMatrix<f64>, f: &DMatrix<f64>) -> PredictorMoments {
    let fa = f.transpose() * a;
    let frf = f.transpose() * r * f;
    let mut q = Matrix2::new(frf[(0, 0)], frf[(0, 1)], frf[(1, 0)], frf[(1, 1)]);
    let off = 0.5 * (q[(0, 1)] + q[(1, 0)]);
    q[(0, 1)] = off;
    q[(1, 0)] = off;
    PredictorMoments::new(Vector2::new(fa[0], fa[1]), stabilize2(&q))
}

/// Step 1: prior state moments and the implied predictor moments.
pub fn evolve(prev: &StateMoments, design: &DesignAt) -> Result<(PriorStateMoments, PredictorMoments)> {
    let p = prev.dim();
    if prev.c.nrows() != p || prev.c.ncols() != p {
        return Err(Error::Structural(format!(
            "state mean has {p} entries but covariance is {}x{}",
            prev.c.nrows(),
            prev.c.ncols()
        )));
    }
    check_design(p, design)?;
    let a = &design.g * &prev.m;
    let r = evolve_covariance(&prev.c, design);
    let pm = predictor_moments(&a, &r, &design.f);
    Ok((PriorStateMoments { a, r }, pm))
}

/// Box over `x = (τ0, h1, τ2)` keeping `τ` admissible, and the map to `τ`.
fn equating_box(family: Family) -> BoxSpec {
    use Transform::*;
    let bound = |f: fn(&[f64]) -> f64| -> crate::numerics::BoundFn { Arc::new(f) };
    match family {
        Family::Normal => BoxSpec::new(vec![
            LowerBounded(1.0),
            Free,
            // τ2 < −τ1²/(2τ0) with τ1 = τ0 h1
            UpperBoundedByFn(bound(|x| -0.5 * x[0] * x[1] * x[1])),
        ]),
        Family::InverseGaussian => BoxSpec::new(vec![
            LowerBounded(0.0),
            Free,
            // τ2 > τ0²/τ1 with τ1 = τ0 e^{h1}
            LowerBoundedByFn(bound(|x| x[0] * (-x[1]).exp())),
        ]),
        Family::Gamma => BoxSpec::new(vec![
            LowerBounded(0.0),
            Free,
            // τ2 < τ0 log(τ1/τ0) = τ0 h1
            UpperBoundedByFn(bound(|x| x[0] * x[1])),
        ]),
        Family::Beta => BoxSpec::new(vec![
            LowerBounded(0.0),
            Free,
            // τ2 < −τ0 softplus(τ1/τ0)
            UpperBoundedByFn(bound(|x| -x[0] * softplus(x[1]))),
        ]),
    }
}

fn tau_from_box(family: Family, x: &[f64]) -> ConjugateParams {
    let (tau0, h1, tau2) = (x[0], x[1], x[2]);
    let tau1 = match family {
        Family::Normal | Family::Beta => tau0 * h1,
        Family::InverseGaussian | Family::Gamma => tau0 * h1.exp(),
    };
    ConjugateParams::new(tau0, tau1, tau2)
}

fn box_from_tau(family: Family, tau: &ConjugateParams) -> [f64; 3] {
    let h1 = match family {
        Family::Normal | Family::Beta => tau.tau1 / tau.tau0,
        Family::InverseGaussian | Family::Gamma => (tau.tau1 / tau.tau0).ln(),
    };
    [tau.tau0, h1, tau.tau2]
}

/// `Δ(τ)' Ω Δ(τ)`; `+∞` outside the admissible region.
pub fn equating_objective(family: Family, tau: &ConjugateParams, pm: &PredictorMoments, weights: &Weights) -> f64 {
    if !family.admissible(tau) {
        return f64::INFINITY;
    }
    let [h1, h2, v1, v2] = family.moment_components(tau);
    let delta = Vector4::new(pm.f[0] - h1, pm.f[1] - h2, pm.q[(0, 0)] - v1, pm.q[(1, 1)] - v2);
    let v = (delta.transpose() * weights * delta)[0];
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Checks that `Ω` is symmetric positive semi-definite.
pub fn check_weights(weights: &Weights) -> Result<()> {
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("moment weights must be finite".into()));
    }
    let scale = weights.amax().max(f64::MIN_POSITIVE);
    if (weights - weights.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Config("moment weight matrix must be symmetric".into()));
    }
    let min_eig = SymmetricEigen::new(*weights).eigenvalues.min();
    if min_eig < -1e-12 * scale {
        return Err(Error::Config(format!(
            "moment weight matrix must be positive semi-definite (smallest eigenvalue {min_eig})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equated {
    pub tau: ConjugateParams,
    pub objective: f64,
}

/// Step 2: the admissible `τ` whose approximate predictor moments best match
/// `pm` in the `Ω`-weighted quadratic form.
pub fn equate_prior(
    family: Family,
    pm: &PredictorMoments,
    weights: &Weights,
    warm_start: Option<&ConjugateParams>,
) -> Result<ConjugateParams> {
    equate_prior_detailed(family, pm, weights, warm_start).map(|e| e.tau)
}

/// [`equate_prior`] also returning the objective at the solution.
pub fn equate_prior_detailed(
    family: Family,
    pm: &PredictorMoments,
    weights: &Weights,
    warm_start: Option<&ConjugateParams>,
) -> Result<Equated> {
    let (f1, f2, q11, q22) = (pm.f[0], pm.f[1], pm.q[(0, 0)], pm.q[(1, 1)]);
    if !(f1.is_finite() && f2.is_finite() && q11.is_finite() && q22.is_finite()) || !(q11 > 0.0 && q22 > 0.0) {
        return Err(Error::Domain {
            family,
            what: format!("predictor moments f = ({f1}, {f2}), q = ({q11}, {q22}) cannot be equated"),
        });
    }
    let objective = |tau: &ConjugateParams| equating_objective(family, tau, pm, weights);

    // Candidates: exact inverse of the (q22, f1, f2) equations, the warm
    // start, and a safe fallback with unit predictor variances.
    let mut candidates: Vec<ConjugateParams> = Vec::with_capacity(3);
    if let Ok(t) = family.moment_inverse(f1, f2, q22) {
        candidates.push(t);
    }
    if let Some(w) = warm_start {
        if family.admissible(w) {
            candidates.push(*w);
        }
    }
    if let Ok(t) = family.moment_inverse(f1, f2, 0.5) {
        candidates.push(t);
    }
    let start = candidates
        .iter()
        .map(|t| (*t, objective(t)))
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Domain {
            family,
            what: format!("no admissible starting point for f = ({f1}, {f2}), q22 = {q22}"),
        })?;

    let bx = equating_box(family);
    let x0 = box_from_tau(family, &start.0);
    let res = minimize_with(
        |x| objective(&tau_from_box(family, x)),
        &x0,
        &bx,
        &MinimizeOptions::default(),
    )?;
    let tau = tau_from_box(family, &res.argmin);
    if !res.converged || !family.admissible(&tau) {
        return Err(Error::Equating {
            objective: res.objective,
            best: tau,
        });
    }
    Ok(Equated {
        tau,
        objective: res.objective,
    })
}

/// Step 3: conjugate update and the posterior predictor moments.
pub fn update_step(family: Family, tau: &ConjugateParams, y: f64) -> Result<(ConjugateParams, PredictorMoments)> {
    let tau_star = family.conjugate_update(tau, y)?;
    let pm = family.prior_moment_map(&tau_star)?;
    Ok((tau_star, pm))
}

/// Step 4: linear Bayes update of the state moments.
pub fn linear_bayes(
    prior: &PriorStateMoments,
    f: &DMatrix<f64>,
    pm: &PredictorMoments,
    f_star: &Vector2<f64>,
    q_star: &Matrix2<f64>,
) -> Result<StateMoments> {
    let p = prior.a.len();
    if f.nrows() != p || f.ncols() != 2 || prior.r.nrows() != p || prior.r.ncols() != p {
        return Err(Error::Structural(format!(
            "linear Bayes: a has {p} entries, R is {}x{}, F is {}x{}",
            prior.r.nrows(),
            prior.r.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    let q_inv = pm.q.try_inverse().filter(|m| m.iter().all(|v| v.is_finite())).ok_or_else(|| {
        Error::Degeneracy {
            context: "linear Bayes",
            detail: format!("Q = {:?} is singular after jitter (det {:e})", pm.q.as_slice(), pm.q.determinant()),
        }
    })?;
    let rf = &prior.r * f;
    let q_inv = DMatrix::from_column_slice(2, 2, q_inv.as_slice());
    let gain = &rf * &q_inv;
    let df = DVector::from_column_slice((f_star - pm.f).as_slice());
    let dq = DMatrix::from_column_slice(2, 2, (q_star - pm.q).as_slice());
    let m = &prior.a + &gain * df;
    let mut c = &prior.r + &gain * dq * gain.transpose();
    symmetrize(&mut c);
    Ok(StateMoments { m, c })
}

/// Validates the observation series against the family support.
pub fn check_series(family: Family, y: &[f64]) -> Result<()> {
    for (i, &v) in y.iter().enumerate() {
        if !family.in_support(v) {
            return Err(Error::Data(format!(
                "observation t = {} (y = {v}) is outside the {family} support {}",
                i + 1,
                family.support()
            )));
        }
    }
    Ok(())
}

/// Runs the filter over the whole series. The first `spec.max_lag()` rows
/// only feed lagged regressors.
pub fn filter_pass(
    spec: &ModelSpec,
    y: &[f64],
    covariates: &Covariates,
    init: &StateMoments,
    weights: &Weights,
) -> Result<FilterResult> {
    spec.validate()?;
    check_weights(weights)?;
    spec.check_columns(covariates)?;
    let warm_up = spec.max_lag();
    if y.len() <= warm_up {
        return Err(Error::Data(format!(
            "series has {} observations but the model needs more than {warm_up} (lag warm-up)",
            y.len()
        )));
    }
    if warm_up > 0 && covariates.rows() < y.len() {
        return Err(Error::Data(format!(
            "covariates have {} rows but the series has {}",
            covariates.rows(),
            y.len()
        )));
    }
    check_series(spec.family, y)?;
    if init.dim() != spec.dim() {
        return Err(Error::Structural(format!(
            "initial state has dimension {} but the model has {}",
            init.dim(),
            spec.dim()
        )));
    }

    let family = spec.family;
    let mut state = init.clone();
    let mut prev_tau: Option<ConjugateParams> = None;
    let mut steps = Vec::with_capacity(y.len() - warm_up);
    for (row, &yt) in y.iter().enumerate().skip(warm_up) {
        let t = row + 1;
        let design = spec.design_at(row, covariates).map_err(|e| e.at(t, "design"))?;
        let (prior, pm) = evolve(&state, &design).map_err(|e| e.at(t, "evolve"))?;
        let eq = equate_prior_detailed(family, &pm, weights, prev_tau.as_ref()).map_err(|e| e.at(t, "equate_prior"))?;
        let (tau_star, post) = update_step(family, &eq.tau, yt).map_err(|e| e.at(t, "update_step"))?;
        let next = linear_bayes(&prior, &design.f, &pm, &post.f, &post.q).map_err(|e| e.at(t, "linear_bayes"))?;
        steps.push(StepRecord {
            t,
            y: yt,
            a: prior.a,
            r: prior.r,
            g: design.g,
            f: pm.f,
            q: pm.q,
            tau: eq.tau,
            equating_objective: eq.objective,
            tau_star,
            f_star: post.f,
            q_star: post.q,
            m: next.m.clone(),
            c: next.c.clone(),
        });
        prev_tau = Some(eq.tau);
        state = next;
    }
    Ok(FilterResult {
        steps,
        smoothed: None,
        model: Arc::new(spec.clone()),
        weights: *weights,
        warm_up,
    })
}

/// Backward smoothing recursion; entry `i` corresponds to `fr.steps[i]`.
pub fn smooth(fr: &FilterResult) -> Result<Vec<StateMoments>> {
    let n = fr.steps.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut out = vec![fr.steps[n - 1].state(); n];
    for i in (0..n - 1).rev() {
        let cur = &fr.steps[i];
        let next = &fr.steps[i + 1];
        let r = stabilize(&next.r);
        let chol = r.clone().cholesky().ok_or_else(|| Error::Degeneracy {
            context: "smoothing",
            detail: format!("R at t = {} is not positive definite (index t = {})", next.t, cur.t),
        })?;
        // J' = R⁻¹ G C, so J = C G' R⁻¹.
        let jt = chol.solve(&(&next.g * &cur.c));
        let j = jt.transpose();
        let m = &cur.m + &j * (&out[i + 1].m - &next.a);
        let mut c = &cur.c + &j * (&out[i + 1].c - &next.r) * &jt;
        symmetrize(&mut c);
        out[i] = StateMoments { m, c };
    }
    Ok(out)
}
