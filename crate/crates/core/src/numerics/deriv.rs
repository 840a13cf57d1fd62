use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default relative step for second differences, `eps^(1/4)`.
pub const HESSIAN_REL_STEP: f64 = 1.220_703_125e-4;

/// Central-difference Hessian of `f` at `x`.
///
/// `step` is relative: coordinate `i` moves by `step * max(1, |x_i|)`.
/// `None` selects [`HESSIAN_REL_STEP`].
pub fn numeric_hessian<F>(f: F, x: &[f64], step: Option<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let rel = step.unwrap_or(HESSIAN_REL_STEP);
    // steps that are exactly representable offsets from x
    let h: Vec<f64> = x
        .iter()
        .map(|&xi| {
            let raw = rel * xi.abs().max(1.0);
            (xi + raw) - xi
        })
        .collect();

    let mut pt = x.to_vec();
    let at = |pt: &[f64]| -> Result<f64> {
        let v = f(pt);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("hessian: f({pt:?}) = {v}")))
        }
    };
    let f0 = at(x)?;
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        pt[i] = x[i] + h[i];
        let fp = at(&pt)?;
        pt[i] = x[i] - h[i];
        let fm = at(&pt)?;
        pt[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                pt[i] = x[i] + si * h[i];
                pt[j] = x[j] + sj * h[j];
                let v = at(&pt);
                pt[i] = x[i];
                pt[j] = x[j];
                v
            };
            let pp = corner(1.0, 1.0)?;
            let pm = corner(1.0, -1.0)?;
            let mp = corner(-1.0, 1.0)?;
            let mm = corner(-1.0, -1.0)?;
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}
