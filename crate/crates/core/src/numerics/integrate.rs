//! Two-dimensional log-integrals: Laplace approximation and a tensor-product
//! Simpson rule used as a reference.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use super::deriv::numeric_hessian;
use super::optim::{minimize_with, BoxSpec, MinimizeOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LaplaceOptions {
    pub minimize: MinimizeOptions,
    /// Relative Hessian step; `None` uses the default.
    pub hessian_step: Option<f64>,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions {
            minimize: MinimizeOptions {
                tol: 1e-13,
                xtol: 1e-9,
                max_iter: 2000,
                initial_step: 0.1,
                restarts: 1,
            },
            hessian_step: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceEstimate {
    pub log_integral: f64,
    pub mode: Vec<f64>,
    /// `L(mode)`.
    pub log_peak: f64,
    /// Negative Hessian of `L` at the mode.
    pub curvature: DMatrix<f64>,
}

/// `log ∫ exp(L(x)) dx` over the plane via the Laplace approximation
/// `L(x̂) + log(2π) - ½ log det(-∇²L(x̂))`.
pub fn laplace_log_integral<F>(log_f: F, init: &[f64; 2]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    laplace(log_f, init, &LaplaceOptions::default()).map(|e| e.log_integral)
}

pub fn laplace<F>(log_f: F, init: &[f64], opts: &LaplaceOptions) -> Result<LaplaceEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    let d = init.len();
    let res = minimize_with(|x| -log_f(x), init, &BoxSpec::free(d), &opts.minimize)
        .map_err(|e| Error::Laplace(format!("mode search: {e}")))?;
    if !res.converged {
        return Err(Error::Optimizer {
            iterations: res.iterations,
            objective: res.objective,
        });
    }
    let hess = numeric_hessian(&log_f, &res.argmin, opts.hessian_step)?;
    let curvature = -hess;
    let chol = Cholesky::new(curvature.clone()).ok_or_else(|| {
        Error::Laplace(format!(
            "Hessian at mode {:?} is not negative definite: {:?}",
            res.argmin,
            curvature.as_slice()
        ))
    })?;
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let log_peak = -res.objective;
    Ok(LaplaceEstimate {
        log_integral: log_peak + 0.5 * d as f64 * (2.0 * PI).ln() - 0.5 * log_det,
        mode: res.argmin,
        log_peak,
        curvature,
    })
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the standard
/// normal weight (weights sum to one), by the Golub–Welsch eigenvalue method.
pub fn gauss_hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize against eigen-solver rounding
    for k in 0..n / 2 {
        let (a, b) = (rule[k], rule[n - 1 - k]);
        let x = 0.5 * (b.0 - a.0);
        let w = 0.5 * (a.1 + b.1);
        rule[k] = (-x, w);
        rule[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        rule[n / 2].0 = 0.0;
    }
    let total: f64 = rule.iter().map(|r| r.1).sum();
    rule.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

/// Refines a Laplace estimate by tensor-product Gauss–Hermite quadrature in
/// the coordinates that whiten the curvature at the mode:
/// `x = x̂ + B v` with `B' (−∇²L) B = I`. One node reproduces the Laplace
/// value; more nodes correct for skewness and kurtosis of the integrand.
pub fn adaptive_gauss_hermite_log_integral<F>(log_f: F, est: &LaplaceEstimate, nodes: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let d = est.mode.len();
    if d != 2 || est.curvature.nrows() != 2 {
        return Err(Error::Structural("adaptive Gauss–Hermite is implemented for two dimensions".into()));
    }
    let chol = Cholesky::new(est.curvature.clone())
        .ok_or_else(|| Error::Laplace("curvature at the mode is not positive definite".into()))?;
    // A = L L'  =>  B = L'^{-1}
    let b = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Laplace("curvature factor is singular".into()))?;
    let log_det_b = -chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let (xs, ws) = gauss_hermite_rule(nodes.max(1));
    let mut acc = LogSum::new();
    let mut pt = [0.0; 2];
    for (&vi, &wi) in xs.iter().zip(&ws) {
        for (&vj, &wj) in xs.iter().zip(&ws) {
            pt[0] = est.mode[0] + b[(0, 0)] * vi + b[(0, 1)] * vj;
            pt[1] = est.mode[1] + b[(1, 0)] * vi + b[(1, 1)] * vj;
            let v = log_f(&pt);
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::Numeric(format!("gauss-hermite: log_f({pt:?}) = {v}")));
            }
            acc.add(v + 0.5 * (vi * vi + vj * vj) + (wi * wj).ln());
        }
    }
    Ok(acc.value() + (2.0 * PI).ln() + log_det_b)
}

/// Fraction of mass on the box edge above which the box is widened.
pub const BOUNDARY_TOLERANCE: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 5;

/// Log of a composite Simpson integral of `exp(log_f)` over
/// `center ± halfwidths`, widening the box (up to five doublings) until the
/// edge carries less than [`BOUNDARY_TOLERANCE`] of the mass.
pub fn quadrature_log_integral<F>(log_f: F, center: [f64; 2], halfwidths: [f64; 2], n: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut hw = halfwidths;
    let mut last = 0.0;
    for _ in 0..=MAX_DOUBLINGS {
        let (log_total, log_edge) = simpson(&log_f, center, hw, n)?;
        last = (log_edge - log_total).exp();
        if last < BOUNDARY_TOLERANCE {
            return Ok(log_total);
        }
        hw = [hw[0] * 2.0, hw[1] * 2.0];
    }
    Err(Error::Coverage { boundary_fraction: last })
}

/// Simpson rule on the fixed box, with no coverage check.
pub fn quadrature_log_integral_fixed<F>(log_f: F, center: [f64; 2], halfwidths: [f64; 2], n: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    simpson(&log_f, center, halfwidths, n).map(|(total, _)| total)
}

/// Running `log Σ exp(v_i)` with a moving max shift.
#[derive(Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

fn simpson<F>(log_f: &F, center: [f64; 2], hw: [f64; 2], n: usize) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if n < 2 || n % 2 != 0 {
        return Err(Error::Numeric(format!("simpson: n = {n} must be even and >= 2")));
    }
    let h = [2.0 * hw[0] / n as f64, 2.0 * hw[1] / n as f64];
    let weight = |k: usize| -> f64 {
        if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut total = LogSum::new();
    let mut edge = LogSum::new();
    let cell = (h[0] * h[1]).ln();
    let mut pt = [0.0; 2];
    for i in 0..=n {
        pt[0] = center[0] - hw[0] + i as f64 * h[0];
        let wi = weight(i);
        for j in 0..=n {
            pt[1] = center[1] - hw[1] + j as f64 * h[1];
            let v = log_f(&pt);
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::Numeric(format!("quadrature: log_f({pt:?}) = {v}")));
            }
            total.add(v + (wi * weight(j)).ln());
            if i == 0 || i == n || j == 0 || j == n {
                edge.add(v + cell);
            }
        }
    }
    let log_total = total.value() + (h[0] * h[1] / 9.0).ln();
    Ok((log_total, edge.value()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_is_exact_for_quadratics() {
        let v = laplace_log_integral(|x| -(x[0] * x[0] + x[1] * x[1]) / 2.0, &[0.3, -0.2]).unwrap();
        assert!((v - (2.0 * PI).ln()).abs() < 1e-7, "{v}");
        let v = laplace_log_integral(
            |x| -((x[0] - 3.0).powi(2) / 2.0 + (x[1] + 1.0).powi(2) / 8.0),
            &[0.0, 0.0],
        )
        .unwrap();
        assert!((v - ((2.0 * PI).ln() + 0.5 * 4f64.ln())).abs() < 1e-7, "{v}");
    }

    #[test]
    fn laplace_rejects_saddles() {
        let err = laplace_log_integral(|x| -(x[0] * x[0]) + 0.0 * x[1], &[0.1, 0.0]);
        assert!(err.is_err());
    }

    #[test]
    fn simpson_gaussian_and_area() {
        let v = quadrature_log_integral(|x| -(x[0] * x[0] + x[1] * x[1]) / 2.0, [0.0, 0.0], [8.0, 8.0], 256).unwrap();
        assert!((v - (2.0 * PI).ln()).abs() < 1e-8, "{v}");
        let a = quadrature_log_integral_fixed(|_| 0.0, [0.0, 0.0], [1.0, 1.0], 64).unwrap();
        assert!((a - 4f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn widens_box_until_mass_is_covered() {
        let v = quadrature_log_integral(|x| -(x[0] * x[0] + x[1] * x[1]) / 2.0, [0.0, 0.0], [2.0, 2.0], 256).unwrap();
        assert!((v - (2.0 * PI).ln()).abs() < 1e-6, "{v}");
    }

    #[test]
    fn constant_integrand_cannot_be_covered() {
        assert!(matches!(
            quadrature_log_integral(|_| 0.0, [0.0, 0.0], [1.0, 1.0], 64),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn gauss_hermite_rule_moments() {
        for n in [1, 2, 5, 10, 16] {
            let (x, w) = gauss_hermite_rule(n);
            let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
            assert!((m(0) - 1.0).abs() < 1e-14);
            assert!(m(1).abs() < 1e-14);
            if n >= 2 {
                assert!((m(2) - 1.0).abs() < 1e-12, "n = {n}");
            }
            if n >= 3 {
                assert!((m(4) - 3.0).abs() < 1e-11, "n = {n}");
            }
        }
    }

    #[test]
    fn gauss_hermite_refines_skewed_integrand() {
        // ∫∫ exp(a s − e^s) exp(−t²/2) ds dt = Γ(a) √(2π)
        let a = 3.0;
        let log_f = |x: &[f64]| a * x[0] - x[0].exp() - 0.5 * x[1] * x[1];
        let est = laplace(log_f, &[0.5, 0.3], &LaplaceOptions::default()).unwrap();
        let exact = 2f64.ln() + 0.5 * (2.0 * PI).ln();
        let lap = est.log_integral;
        assert!((lap - exact).abs() > 1e-2);
        // The left tail e^{3s} is heavier than Gaussian, so convergence is
        // algebraic rather than spectral: steady up to n = 32.
        let err = |n: usize| (adaptive_gauss_hermite_log_integral(log_f, &est, n).unwrap() - exact).abs();
        let errs: Vec<f64> = [4, 8, 12, 16, 24, 32].map(err).to_vec();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[3] < 1e-5, "n = 16: {:e}", errs[3]);
        assert!(errs[5] < 1e-7, "n = 32: {:e}", errs[5]);
        let one = adaptive_gauss_hermite_log_integral(log_f, &est, 1).unwrap();
        assert!((one - lap).abs() < 1e-12);
    }
}
