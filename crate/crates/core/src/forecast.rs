//! Forecasting: propagation of the state moments over a horizon, the
//! predictive density `p(y) = a(y) κ(τ) / κ(τ*)` and its grid summaries
//! (mean, mode, highest-density interval).

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::expfam::{ConjugateParams, Family, KappaMethod, LAPLACE_KAPPA_OPTIONS, PREDICTIVE_KAPPA_METHOD};
use crate::filter::{equate_prior, evolve_covariance, predictor_moments, FilterResult, StateMoments};
use crate::modelspec::{Covariates, ModelSpec};
use crate::numerics::{logistic, logit};

/// Lower/upper margin kept from the support boundaries on predictive grids.
pub const SUPPORT_EPSILON: f64 = 1e-6;
/// Smallest accepted grid.
pub const MIN_GRID_SIZE: usize = 256;
pub const DEFAULT_GRID_SIZE: usize = 4096;
/// Tail integrand, relative to its peak, at which the grid stops widening.
const EDGE_TOLERANCE: f64 = 1e-12;
/// Chebyshev–Lobatto interpolation degree for the log-density on the grid.
const INTERPOLATION_DEGREE: usize = 64;
/// Accepted interpolation error in the log-density where the density matters.
const INTERPOLATION_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonMoments {
    pub h: usize,
    pub a: DVector<f64>,
    pub r: DMatrix<f64>,
    pub f: Vector2<f64>,
    pub q: Matrix2<f64>,
}

/// State and predictor moments `h = 0, 1, …, horizon` steps after data row
/// `last_row`, whose filtered moments are `state`.
pub fn propagate_path(
    spec: &ModelSpec,
    state: &StateMoments,
    last_row: usize,
    horizon: usize,
    covariates: &Covariates,
) -> Result<Vec<HorizonMoments>> {
    if state.dim() != spec.dim() {
        return Err(Error::Structural(format!(
            "state has dimension {} but the model has {}",
            state.dim(),
            spec.dim()
        )));
    }
    let design0 = spec.design_at(last_row, covariates)?;
    let pm0 = predictor_moments(&state.m, &state.c, &design0.f);
    let mut out = vec![HorizonMoments {
        h: 0,
        a: state.m.clone(),
        r: state.c.clone(),
        f: pm0.f,
        q: pm0.q,
    }];
    for h in 1..=horizon {
        let design = spec.design_at(last_row + h, covariates)?;
        let prev = &out[h - 1];
        let a = &design.g * &prev.a;
        let r = evolve_covariance(&prev.r, &design);
        let pm = predictor_moments(&a, &r, &design.f);
        out.push(HorizonMoments {
            h,
            a,
            r,
            f: pm.f,
            q: pm.q,
        });
    }
    Ok(out)
}

/// Moments `h` steps ahead (`h = 0` gives the filtered moments themselves).
pub fn propagate(
    spec: &ModelSpec,
    state: &StateMoments,
    last_row: usize,
    h: usize,
    covariates: &Covariates,
) -> Result<HorizonMoments> {
    let mut path = propagate_path(spec, state, last_row, h, covariates)?;
    Ok(path.pop().expect("path has h + 1 entries"))
}

/// Predictive distribution indexed by a conjugate prior `τ`.
#[derive(Debug, Clone, Copy)]
pub struct Predictive {
    pub family: Family,
    pub tau: ConjugateParams,
    pub method: KappaMethod,
    log_kappa: f64,
}

impl Predictive {
    pub fn new(family: Family, tau: ConjugateParams) -> Result<Self> {
        Predictive::with_method(family, tau, PREDICTIVE_KAPPA_METHOD)
    }

    pub fn with_method(family: Family, tau: ConjugateParams, method: KappaMethod) -> Result<Self> {
        let log_kappa = family.log_kappa_with(&tau, method)?;
        Ok(Predictive {
            family,
            tau,
            method,
            log_kappa,
        })
    }

    pub fn log_kappa(&self) -> f64 {
        self.log_kappa
    }

    /// `log a(y) + log κ(τ) − log κ(τ*)`.
    pub fn log_density(&self, y: f64) -> Result<f64> {
        let log_a = self.family.log_base(y)?;
        let tau_star = self.family.conjugate_update(&self.tau, y)?;
        let post = self
            .family
            .log_kappa_from(&tau_star, None, &LAPLACE_KAPPA_OPTIONS, self.method)?
            .log_kappa;
        Ok(log_a + self.log_kappa - post)
    }
}

/// `log p(y | τ)` for the predictive implied by `τ`.
pub fn predictive_log_density(family: Family, tau: &ConjugateParams, y: f64) -> Result<f64> {
    Predictive::new(family, *tau)?.log_density(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub tau: ConjugateParams,
    pub mean: f64,
    pub mode: f64,
    pub hpd_low: f64,
    pub hpd_high: f64,
    pub level: f64,
    /// Probability of the highest-density set: the level-set interval when
    /// it is a single interval, else the water-filled grid cells.
    pub hpd_mass: f64,
    /// Probability of `[hpd_low, hpd_high]`; equals `hpd_mass` when unimodal.
    pub hull_mass: f64,
    /// Grid integral of the unnormalized density (≈ 1).
    pub mass: f64,
    /// The highest-density set is not one interval; the hull is reported.
    pub multimodal: bool,
    /// Grid points where the density could not be evaluated.
    pub dropped: usize,
    /// `(y, density)` pairs in increasing `y`.
    pub grid: Vec<(f64, f64)>,
    /// Quadrature weights matching `grid`.
    pub weights: Vec<f64>,
}

/// Map between the grid coordinate `u` and `y`:
/// `y = T(c + s·sinh(u))` with `T` the inverse mean link.
#[derive(Debug, Clone, Copy)]
struct GridMap {
    family: Family,
    c: f64,
    s: f64,
}

impl GridMap {
    fn new(family: Family, tau: &ConjugateParams) -> Result<Self> {
        let pm = family.prior_moment_map(tau)?;
        let (h1, phi, v1) = (pm.f[0], pm.f[1].exp(), pm.q[(0, 0)]);
        let mu = family.mean_inv_link(h1);
        let obs = match family {
            Family::Normal | Family::Gamma => 1.0 / phi,
            Family::InverseGaussian => mu / phi,
            Family::Beta => 1.0 / (mu * (1.0 - mu) * (1.0 + phi)),
        };
        let s = (v1 + obs).sqrt();
        if !(s.is_finite() && s > 0.0 && h1.is_finite()) {
            return Err(Error::Numeric(format!("{family}: cannot place a predictive grid for {tau:?}")));
        }
        Ok(GridMap { family, c: h1, s })
    }

    fn z(&self, u: f64) -> f64 {
        self.c + self.s * u.sinh()
    }

    fn u_of_z(&self, z: f64) -> f64 {
        ((z - self.c) / self.s).asinh()
    }

    /// `(y, dy/du)`.
    fn y(&self, u: f64) -> (f64, f64) {
        let z = self.z(u);
        let dz = self.s * u.cosh();
        match self.family {
            Family::Normal => (z, dz),
            Family::Gamma | Family::InverseGaussian => {
                let y = z.exp();
                (y, y * dz)
            }
            Family::Beta => {
                let y = logistic(z);
                (y, y * (1.0 - y) * dz)
            }
        }
    }

    /// Range of `u` keeping `y` inside the (margined) support.
    fn limits(&self) -> (f64, f64) {
        const U_MAX: f64 = 40.0;
        let (zlo, zhi) = match self.family {
            Family::Normal => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Gamma | Family::InverseGaussian => (SUPPORT_EPSILON.ln(), 700.0),
            Family::Beta => (logit(SUPPORT_EPSILON), logit(1.0 - SUPPORT_EPSILON)),
        };
        (self.u_of_z(zlo).max(-U_MAX), self.u_of_z(zhi).min(U_MAX))
    }
}

/// Barycentric interpolation through Chebyshev–Lobatto nodes.
struct Chebyshev {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl Chebyshev {
    fn nodes(lo: f64, hi: f64, degree: usize) -> Vec<f64> {
        (0..=degree)
            .map(|k| {
                let x = (std::f64::consts::PI * k as f64 / degree as f64).cos();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * x
            })
            .collect()
    }

    fn eval(&self, u: f64) -> f64 {
        let n = self.nodes.len() - 1;
        let (mut num, mut den) = (0.0, 0.0);
        for (k, (&x, &v)) in self.nodes.iter().zip(&self.values).enumerate() {
            let d = u - x;
            if d == 0.0 {
                return v;
            }
            let mut w = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k == 0 || k == n {
                w *= 0.5;
            }
            num += w * v / d;
            den += w / d;
        }
        num / den
    }
}

/// Predictive density evaluated on a grid with mean, mode and the
/// highest-density interval at `level`.
pub fn predictive_summary(
    family: Family,
    tau: &ConjugateParams,
    level: f64,
    grid_size: usize,
) -> Result<PredictiveSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("interval level {level} must lie in (0, 1)")));
    }
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::Config(format!(
            "grid size {grid_size} is below the minimum of {MIN_GRID_SIZE}"
        )));
    }
    let pred = Predictive::new(family, *tau)?;
    let map = GridMap::new(family, tau)?;
    let log_g = |u: f64| -> Option<f64> {
        let (y, dy) = map.y(u);
        if !family.in_support(y) {
            return None;
        }
        pred.log_density(y).ok().map(|v| v + dy.ln()).filter(|v| v.is_finite())
    };

    // Widen the u-range until the integrand is negligible at both edges.
    let (lim_lo, lim_hi) = map.limits();
    if !(lim_lo < lim_hi) {
        return Err(Error::Numeric(format!("{family}: predictive grid range is empty for {tau:?}")));
    }
    let peak_ref = log_g(0.0f64.clamp(lim_lo, lim_hi)).unwrap_or(f64::NEG_INFINITY);
    let widen = |start: f64, step: f64, limit: f64| -> f64 {
        let mut u = start;
        let mut reference = peak_ref;
        loop {
            if (step > 0.0 && u >= limit) || (step < 0.0 && u <= limit) {
                return limit;
            }
            match log_g(u) {
                Some(v) => {
                    if v > reference {
                        reference = v;
                    }
                    if reference.is_finite() && v - reference < EDGE_TOLERANCE.ln() {
                        return u;
                    }
                }
                None => return u,
            }
            u += step;
        }
    };
    let u_lo = widen((-3.0f64).max(lim_lo), -0.5, lim_lo);
    let u_hi = widen(3.0f64.min(lim_hi), 0.5, lim_hi);

    let n = grid_size;
    let du = (u_hi - u_lo) / (n - 1) as f64;
    let us: Vec<f64> = (0..n).map(|i| u_lo + du * i as f64).collect();

    // Log-density (in y) at every grid point.
    let log_p_direct = |u: f64| -> Option<f64> {
        let (y, _) = map.y(u);
        if !family.in_support(y) {
            return None;
        }
        pred.log_density(y).ok().filter(|v| v.is_finite())
    };
    let log_p: Vec<Option<f64>> = if family == Family::Normal {
        us.iter().map(|&u| log_p_direct(u)).collect()
    } else {
        match interpolate_log_density(&log_p_direct, u_lo, u_hi) {
            Some(cheb) => us.iter().map(|&u| Some(cheb.eval(u))).collect(),
            None => us.iter().map(|&u| log_p_direct(u)).collect(),
        }
    };

    let mut grid = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut dropped = 0;
    for (i, (&u, lp)) in us.iter().zip(&log_p).enumerate() {
        let (y, dy) = map.y(u);
        let p = match lp {
            Some(v) => v.exp(),
            None => {
                dropped += 1;
                0.0
            }
        };
        let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        grid.push((y, p));
        weights.push(end * du * dy);
    }
    summarize(tau, level, grid, weights, dropped)
}

/// Interpolates the log-density in `u`, verifying the result against direct
/// evaluations between nodes; `None` when any node fails or the check does
/// not pass at the highest degree tried.
fn interpolate_log_density<F>(log_p: &F, lo: f64, hi: f64) -> Option<Chebyshev>
where
    F: Fn(f64) -> Option<f64>,
{
    let mut degree = INTERPOLATION_DEGREE;
    for _ in 0..2 {
        let nodes = Chebyshev::nodes(lo, hi, degree);
        let values: Option<Vec<f64>> = nodes.iter().map(|&u| log_p(u)).collect();
        let cheb = Chebyshev { nodes, values: values? };
        let peak = cheb.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // Check midpoints between the nodes nearest the peak.
        let order = {
            let mut idx: Vec<usize> = (0..cheb.values.len()).collect();
            idx.sort_by(|&a, &b| cheb.values[b].total_cmp(&cheb.values[a]));
            idx
        };
        let mut ok = true;
        for &k in order.iter().take(6) {
            let k2 = if k + 1 < cheb.nodes.len() { k + 1 } else { k - 1 };
            let u = 0.5 * (cheb.nodes[k] + cheb.nodes[k2]);
            match log_p(u) {
                Some(v) if v > peak - 30.0 => {
                    if (cheb.eval(u) - v).abs() > INTERPOLATION_TOLERANCE * v.abs().max(1.0) {
                        ok = false;
                        break;
                    }
                }
                Some(_) => {}
                None => return None,
            }
        }
        if ok {
            return Some(cheb);
        }
        degree *= 2;
    }
    None
}

/// Mean, mode and water-filled HPD interval from a weighted grid.
fn summarize(
    tau: &ConjugateParams,
    level: f64,
    grid: Vec<(f64, f64)>,
    weights: Vec<f64>,
    dropped: usize,
) -> Result<PredictiveSummary> {
    let n = grid.len();
    let mass: f64 = grid.iter().zip(&weights).map(|((_, p), w)| p * w).sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Numeric(format!("predictive grid has mass {mass} for {tau:?}")));
    }
    let mean = grid.iter().zip(&weights).map(|((y, p), w)| y * p * w).sum::<f64>() / mass;

    let imax = (0..n).max_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1)).expect("non-empty grid");
    let mut mode = grid[imax].0;
    if imax > 0 && imax + 1 < n {
        // Parabola through the three points around the maximum.
        let (x0, y0) = grid[imax - 1];
        let (x1, y1) = grid[imax];
        let (x2, y2) = grid[imax + 1];
        let d = (x0 - x1) * (x0 - x2) * (x1 - x2);
        let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / d;
        let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / d;
        if a < 0.0 {
            let v = -b / (2.0 * a);
            if v.is_finite() && v > x0 && v < x2 {
                mode = v;
            }
        }
    }

    // Water-filling: take cells in decreasing density until the level is reached.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| grid[b].1.total_cmp(&grid[a].1).then(a.cmp(&b)));
    let target = level * mass;
    let mut acc = 0.0;
    let mut selected = vec![false; n];
    for &i in &order {
        if acc >= target {
            break;
        }
        selected[i] = true;
        acc += grid[i].1 * weights[i];
    }
    let lo = selected.iter().position(|&s| s).expect("at least one cell selected");
    let hi = selected.iter().rposition(|&s| s).expect("at least one cell selected");
    let multimodal = selected[lo..=hi].iter().any(|&s| !s);

    let (hpd_low, hpd_high, hpd_mass, hull_mass) = if multimodal {
        let hull: f64 = (lo..=hi).map(|i| grid[i].1 * weights[i]).sum();
        (grid[lo].0, grid[hi].0, acc, hull)
    } else {
        let (l, h, m) = level_set_interval(&grid, &weights, imax, target);
        (l, h, m, m)
    };
    let mode = mode.clamp(hpd_low, hpd_high);

    Ok(PredictiveSummary {
        tau: *tau,
        mean,
        mode,
        hpd_low,
        hpd_high,
        level,
        hpd_mass: hpd_mass / mass,
        hull_mass: hull_mass / mass,
        mass,
        multimodal,
        dropped,
        grid,
        weights,
    })
}

/// The interval `{y : p(y) ≥ c}` around the peak `imax` holding `target`
/// mass, with `c` found by bisection. Each grid point owns the cell between
/// the midpoints to its neighbours and the distribution function is linear
/// within a cell; the ends are where the linearly interpolated density
/// crosses `c`. Returns `(low, high, mass)`.
fn level_set_interval(grid: &[(f64, f64)], weights: &[f64], imax: usize, target: f64) -> (f64, f64, f64) {
    let n = grid.len();
    // Cell edges and the cumulative mass at each edge.
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(grid[0].0);
    edges.extend(grid.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)));
    edges.push(grid[n - 1].0);
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for (i, &(_, p)) in grid.iter().enumerate() {
        cum.push(cum[i] + p * weights[i]);
    }
    let cdf = |y: f64| -> f64 {
        let k = edges.partition_point(|&e| e <= y).clamp(1, n);
        let (e0, e1) = (edges[k - 1], edges[k]);
        let frac = if e1 > e0 { ((y - e0) / (e1 - e0)).clamp(0.0, 1.0) } else { 1.0 };
        cum[k - 1] + frac * (cum[k] - cum[k - 1])
    };
    let crossing = |j: usize, k: usize, c: f64| -> f64 {
        // p(grid[j]) < c ≤ p(grid[k]), j and k adjacent
        let ((yj, pj), (yk, pk)) = (grid[j], grid[k]);
        yj + (c - pj) / (pk - pj) * (yk - yj)
    };
    let ends = |c: f64| -> (f64, f64) {
        let low = (0..imax).rev().find(|&j| grid[j].1 < c).map_or(grid[0].0, |j| crossing(j, j + 1, c));
        let high = (imax + 1..n).find(|&j| grid[j].1 < c).map_or(grid[n - 1].0, |j| crossing(j, j - 1, c));
        (low, high)
    };
    let mass_at = |c: f64| {
        let (l, h) = ends(c);
        (l, h, cdf(h) - cdf(l))
    };
    // mass_at is non-increasing in c
    let (mut c_lo, mut c_hi) = (0.0, grid[imax].1);
    for _ in 0..100 {
        let mid = 0.5 * (c_lo + c_hi);
        if mid <= c_lo || mid >= c_hi {
            break;
        }
        if mass_at(mid).2 >= target {
            c_lo = mid;
        } else {
            c_hi = mid;
        }
    }
    mass_at(c_lo)
}

/// Predictive summaries for `h = 1..=horizon` after the last filtered step.
/// `covariates` must cover every lagged regressor the horizon needs.
pub fn forecast_path(
    fr: &FilterResult,
    horizon: usize,
    level: f64,
    grid_size: usize,
    covariates: &Covariates,
) -> Result<Vec<PredictiveSummary>> {
    if horizon == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let last = fr
        .steps
        .last()
        .ok_or_else(|| Error::Data("cannot forecast from an empty filter result".into()))?;
    let spec = &fr.model;
    let last_row = last.t - 1;
    let path = propagate_path(spec, &last.state(), last_row, horizon, covariates)?;
    let mut out = Vec::with_capacity(horizon);
    for hm in &path[1..] {
        let pm = crate::expfam::PredictorMoments::new(hm.f, hm.q);
        let tau = equate_prior(spec.family, &pm, &fr.weights, Some(&last.tau))
            .map_err(|e| e.at(last.t + hm.h, "equate_prior"))?;
        out.push(predictive_summary(spec.family, &tau, level, grid_size).map_err(|e| e.at(last.t + hm.h, "predictive"))?);
    }
    Ok(out)
}
