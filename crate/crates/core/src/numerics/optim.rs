//! Derivative-free minimization (Nelder–Mead) over boxes expressed as smooth
//! reparameterizations.
//!
//! Every constrained coordinate is mapped to an unconstrained one:
//!
//! ```text
//! Free                   x = z
//! LowerBounded(b)        x = b + exp(z)
//! LowerBoundedByFn(b)    x = b(x_0..x_{i-1}) + exp(z)
//! UpperBoundedByFn(b)    x = b(x_0..x_{i-1}) - exp(z)
//! ```
//!
//! Bound functions only see the coordinates before them, so the map is
//! evaluated left to right and every iterate is strictly feasible.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Bound that depends on the already-mapped leading coordinates.
pub type BoundFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Transform {
    Free,
    LowerBounded(f64),
    LowerBoundedByFn(BoundFn),
    UpperBoundedByFn(BoundFn),
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Free => write!(f, "Free"),
            Transform::LowerBounded(b) => write!(f, "LowerBounded({b})"),
            Transform::LowerBoundedByFn(_) => write!(f, "LowerBoundedByFn(..)"),
            Transform::UpperBoundedByFn(_) => write!(f, "UpperBoundedByFn(..)"),
        }
    }
}

/// Per-coordinate feasibility description.
#[derive(Debug, Clone)]
pub struct BoxSpec {
    coords: Vec<Transform>,
}

impl BoxSpec {
    pub fn new(coords: Vec<Transform>) -> Self {
        BoxSpec { coords }
    }

    /// All coordinates unconstrained.
    pub fn free(n: usize) -> Self {
        BoxSpec {
            coords: vec![Transform::Free; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Maps unconstrained coordinates to the feasible region.
    pub fn to_constrained(&self, z: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(z.len());
        for (t, &zi) in self.coords.iter().zip(z) {
            let xi = match t {
                Transform::Free => zi,
                Transform::LowerBounded(b) => b + zi.exp(),
                Transform::LowerBoundedByFn(b) => b(&x) + zi.exp(),
                Transform::UpperBoundedByFn(b) => b(&x) - zi.exp(),
            };
            x.push(xi);
        }
        x
    }

    /// Inverse of [`BoxSpec::to_constrained`]; `None` when `x` is not strictly feasible.
    pub fn to_unconstrained(&self, x: &[f64]) -> Option<Vec<f64>> {
        if x.len() != self.coords.len() {
            return None;
        }
        let mut z = Vec::with_capacity(x.len());
        for (i, t) in self.coords.iter().enumerate() {
            let xi = x[i];
            let gap = match t {
                Transform::Free => {
                    z.push(xi);
                    continue;
                }
                Transform::LowerBounded(b) => xi - b,
                Transform::LowerBoundedByFn(b) => xi - b(&x[..i]),
                Transform::UpperBoundedByFn(b) => b(&x[..i]) - xi,
            };
            if !(gap > 0.0) || !gap.is_finite() {
                return None;
            }
            z.push(gap.ln());
        }
        Some(z)
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Relative spread of objective values across the simplex.
    pub tol: f64,
    /// Simplex size in unconstrained coordinates.
    pub xtol: f64,
    pub max_iter: usize,
    /// Initial simplex offset, scaled by `max(1, |z_i|)`.
    pub initial_step: f64,
    /// Fresh simplices built around the best point after convergence.
    pub restarts: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: 1e-10,
            xtol: 1e-8,
            max_iter: 2000,
            initial_step: 0.25,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    /// Minimizer in original (constrained) coordinates.
    pub argmin: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `objective` over `bx` starting from the feasible point `init`.
pub fn minimize<F>(objective: F, init: &[f64], bx: &BoxSpec, tol: f64) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64,
{
    let opts = MinimizeOptions {
        tol,
        ..MinimizeOptions::default()
    };
    minimize_with(objective, init, bx, &opts)
}

pub fn minimize_with<F>(objective: F, init: &[f64], bx: &BoxSpec, opts: &MinimizeOptions) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64,
{
    let n = init.len();
    if n == 0 || bx.dim() != n {
        return Err(Error::Structural(format!(
            "minimize: init has {} coordinates, box has {}",
            n,
            bx.dim()
        )));
    }
    let z0 = bx
        .to_unconstrained(init)
        .ok_or_else(|| Error::Numeric(format!("minimize: initial point {init:?} is not feasible")))?;
    let eval = |z: &[f64]| objective(&bx.to_constrained(z));
    let f0 = eval(&z0);
    if !f0.is_finite() {
        return Err(Error::Numeric(format!("minimize: objective is {f0} at the initial point")));
    }

    let mut best = (z0, f0);
    let mut iterations = 0;
    let mut converged = false;
    let mut step = opts.initial_step;
    for round in 0..=opts.restarts {
        let run = nelder_mead(&eval, &best.0, best.1, step, opts, opts.max_iter - iterations);
        iterations += run.iterations;
        let improved = best.1 - run.f;
        let prev = best.1;
        best = (run.z, run.f);
        match run.status {
            Status::Aborted => {
                converged = false;
                break;
            }
            Status::MaxIter => {
                converged = false;
                break;
            }
            Status::Converged => {
                converged = true;
                if round > 0 && improved <= opts.tol * prev.abs().max(f64::MIN_POSITIVE) {
                    break;
                }
            }
        }
        step *= 0.1;
    }

    Ok(OptimResult {
        argmin: bx.to_constrained(&best.0),
        objective: best.1,
        iterations,
        converged,
    })
}

enum Status {
    Converged,
    MaxIter,
    Aborted,
}

struct Run {
    z: Vec<f64>,
    f: f64,
    iterations: usize,
    status: Status,
}

fn nelder_mead<E>(eval: &E, z0: &[f64], f0: f64, step: f64, opts: &MinimizeOptions, budget: usize) -> Run
where
    E: Fn(&[f64]) -> f64,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let n = z0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((z0.to_vec(), f0));
    for i in 0..n {
        let mut z = z0.to_vec();
        z[i] += step * z0[i].abs().max(1.0);
        let f = eval(&z);
        if f.is_nan() || f == f64::NEG_INFINITY {
            return Run {
                z: z0.to_vec(),
                f: f0,
                iterations: 0,
                status: Status::Aborted,
            };
        }
        simplex.push((z, f));
    }

    let mut it = 0;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (fb, fw) = (simplex[0].1, simplex[n].1);
        let fspread = fw - fb;
        let fscale = 0.5 * (fb.abs() + fw.abs());
        let size = simplex[1..]
            .iter()
            .map(|(z, _)| z.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (fspread.is_finite() && fspread <= opts.tol * fscale) || size <= opts.xtol {
            return finish(simplex, it, Status::Converged);
        }
        if it >= budget {
            return finish(simplex, it, Status::MaxIter);
        }
        it += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (z, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(z) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let point = |coef: f64, from: &[f64], out: &mut Vec<f64>| {
            for j in 0..n {
                out[j] = centroid[j] + coef * (from[j] - centroid[j]);
            }
        };

        point(-REFLECT, &worst, &mut trial);
        let fr = eval(&trial);
        if fr.is_nan() || fr == f64::NEG_INFINITY {
            return finish(simplex, it, Status::Aborted);
        }
        if fr < simplex[0].1 {
            let reflected = trial.clone();
            point(-REFLECT * EXPAND, &worst, &mut trial);
            let fe = eval(&trial);
            if fe.is_nan() || fe == f64::NEG_INFINITY {
                return finish(simplex, it, Status::Aborted);
            }
            simplex[n] = if fe < fr { (trial.clone(), fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (trial.clone(), fr);
            continue;
        }
        let fc = if fr < fw {
            point(-REFLECT * CONTRACT, &worst, &mut trial);
            eval(&trial)
        } else {
            point(CONTRACT, &worst, &mut trial);
            eval(&trial)
        };
        if fc.is_nan() || fc == f64::NEG_INFINITY {
            return finish(simplex, it, Status::Aborted);
        }
        if fc < fr.min(fw) {
            simplex[n] = (trial.clone(), fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (z, f) in simplex.iter_mut().skip(1) {
            for j in 0..n {
                z[j] = best[j] + SHRINK * (z[j] - best[j]);
            }
            *f = eval(z);
            if f.is_nan() || *f == f64::NEG_INFINITY {
                return finish(simplex, it, Status::Aborted);
            }
        }
    }
}

fn finish(mut simplex: Vec<(Vec<f64>, f64)>, iterations: usize, status: Status) -> Run {
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (z, f) = simplex.swap_remove(0);
    Run {
        z,
        f,
        iterations,
        status,
    }
}
