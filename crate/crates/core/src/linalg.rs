//! Small dense least-squares helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Householder least-squares solve of `x * coef ~ y`.
///
/// `qty` holds the first `p` entries of `Q' y`; the residual sum of squares
/// is accumulated from the trailing entries so no cancellation occurs.
#[derive(Debug, Clone)]
pub(crate) struct LeastSquares {
    pub coef: DVector<f64>,
    pub rss: f64,
    pub r: DMatrix<f64>,
    pub qty: DVector<f64>,
}

/// Relative tolerance under which a singular value (or `R` diagonal) counts as zero.
pub(crate) fn rank_tolerance(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// Numeric rank from singular values: `sigma <= max(n, p) * eps * sigma_max` counts as zero.
pub(crate) fn numeric_rank(x: &DMatrix<f64>) -> usize {
    if x.is_empty() {
        return 0;
    }
    let sv = x.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    let tol = rank_tolerance(x.nrows(), x.ncols()) * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Returns `None` when the triangular factor is numerically singular.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<LeastSquares> {
    let (n, p) = x.shape();
    debug_assert_eq!(n, y.len());
    if n < p || p == 0 {
        return None;
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = rank_tolerance(n, p) * rmax;
    if rmax == 0.0 || r.diagonal().iter().any(|v| v.abs() <= tol) {
        return None;
    }
    let mut qty_full = y.clone();
    qr.q_tr_mul(&mut qty_full);
    let qty = qty_full.rows(0, p).into_owned();
    let rss = qty_full.rows(p, n - p).norm_squared();
    let coef = r.solve_upper_triangular(&qty)?;
    Some(LeastSquares { coef, rss, r, qty })
}

/// Stacks row blocks vertically.
pub(crate) fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    out
}

pub(crate) fn vconcat(parts: &[&DVector<f64>]) -> DVector<f64> {
    let len: usize = parts.iter().map(|v| v.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for v in parts {
        out.rows_mut(at, v.len()).copy_from(v);
        at += v.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_duplicated_column() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        assert_eq!(numeric_rank(&x), 1);
        assert!(least_squares(&x, &DVector::from_element(4, 1.0)).is_none());
    }

    #[test]
    fn residual_from_trailing_rotation() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_vec(vec![2.0, 4.0]);
        let ls = least_squares(&x, &y).unwrap();
        assert!((ls.coef[0] - 3.0).abs() < 1e-14);
        assert!((ls.rss - 2.0).abs() < 1e-14);
    }
}
