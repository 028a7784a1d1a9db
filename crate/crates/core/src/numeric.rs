//! Small numerical helpers shared by the law and fitter modules.

use nalgebra::DMatrix;

/// Central-difference Jacobian of a vector function `f: R^p -> R^m` at `u`.
///
/// `f` writes its `m` outputs into the provided buffer and returns `false` when
/// the point is not evaluable; the Jacobian is then `None`.
pub(crate) fn central_jacobian<F>(mut f: F, u: &[f64], m: usize, step: f64) -> Option<DMatrix<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    let p = u.len();
    let mut jac = DMatrix::zeros(m, p);
    let mut probe = u.to_vec();
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    for j in 0..p {
        probe[j] = u[j] + step;
        if !f(&probe, &mut plus) {
            return None;
        }
        probe[j] = u[j] - step;
        if !f(&probe, &mut minus) {
            return None;
        }
        probe[j] = u[j];
        // The actual spacing, not 2*step, so rounding in u +/- step does not bias the quotient.
        let width = (u[j] + step) - (u[j] - step);
        for i in 0..m {
            let v = (plus[i] - minus[i]) / width;
            if !v.is_finite() {
                return None;
            }
            jac[(i, j)] = v;
        }
    }
    Some(jac)
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
