//! Small dense helpers shared by the fitting code.

use faer::{Mat, MatRef};

use crate::C64;

/// Least-squares solution of `a x ≈ b`, or `None` when `a` is numerically
/// rank deficient.
pub(crate) fn lstsq(a: MatRef<'_, f64>, b: &[f64]) -> Option<Vec<f64>> {
    use faer::linalg::solvers::SolveLstsq;
    let (m, n) = a.shape();
    if m < n || b.len() != m || n == 0 {
        return None;
    }
    if a.as_ref().norm_l2() == 0.0 || a.col_iter().any(|c| c.norm_l2() == 0.0) {
        return None;
    }
    // scale columns so rank detection does not depend on units
    let scales: Vec<f64> = a.col_iter().map(|c| c.norm_l2()).collect();
    let scaled = Mat::from_fn(m, n, |i, j| a[(i, j)] / scales[j]);
    let qr = scaled.col_piv_qr();
    let r = qr.R();
    let r00 = r[(0, 0)].abs();
    if (0..n).any(|i| !(r[(i, i)].abs() > 1e-10 * r00)) {
        return None;
    }
    let rhs = Mat::from_fn(m, 1, |i, _| b[i]);
    let x = qr.solve_lstsq(rhs);
    Some((0..n).map(|j| x[(j, 0)] / scales[j]).collect())
}

/// `min_φ ‖a − e^{iφ} b‖` in the Frobenius norm.
pub(crate) fn phase_aligned_distance(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    let mut overlap = C64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            overlap += b[(i, j)].conj() * a[(i, j)];
        }
    }
    let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { C64::new(1.0, 0.0) };
    let mut d = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            d += (a[(i, j)] - phase * b[(i, j)]).norm_sqr();
        }
    }
    d.sqrt()
}
