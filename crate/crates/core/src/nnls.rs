//! Lawson–Hanson active-set solver for `min ‖A·x − b‖²` subject to `x ≥ 0`.

use nalgebra::{DMatrix, DVector};

/// Least squares on the columns in `free` (QR, so the normal equations are
/// never formed); entries outside `free` are zero.
fn restricted_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, free: &[usize]) -> DVector<f64> {
    let mut out = DVector::zeros(a.ncols());
    if free.is_empty() {
        return out;
    }
    let sub = a.select_columns(free);
    let qr = sub.qr();
    let rhs = qr.q().transpose() * b;
    let sol = qr
        .r()
        .solve_upper_triangular(&rhs)
        .unwrap_or_else(|| DVector::from_element(free.len(), f64::NAN));
    for (k, &j) in free.iter().enumerate() {
        out[j] = sol[k];
    }
    out
}

/// Solves the nonnegative least-squares problem to first-order tolerance
/// `tol` on the dual vector `Aᵀ(b − A·x)`.
///
/// Columns that are identically zero never enter the free set and stay at 0.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut free = vec![false; n];
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let dual = a.tr_mul(&(b - a * &x));
        let candidate = (0..n)
            .filter(|&j| !free[j])
            .max_by(|&i, &j| dual[i].total_cmp(&dual[j]));
        let Some(enter) = candidate else { break };
        if dual[enter] <= tol {
            break;
        }
        free[enter] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| free[j]).collect();
            let s = restricted_lstsq(a, b, &idx);
            if idx.iter().all(|&j| s[j] > 0.0) {
                x = s;
                break;
            }
            // Step back to the boundary and release the blocking variables.
            let mut alpha = f64::INFINITY;
            for &j in &idx {
                if s[j] <= 0.0 {
                    let ratio = x[j] / (x[j] - s[j]);
                    if ratio < alpha {
                        alpha = ratio;
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for &j in &idx {
                x[j] += alpha * (s[j] - x[j]);
                if x[j] <= 0.0 || (s[j] <= 0.0 && x[j] <= f64::EPSILON * x.amax()) {
                    x[j] = 0.0;
                    free[j] = false;
                }
            }
            if !free.iter().any(|f| *f) {
                break;
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_optimum_is_kept() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = nnls(&a, &b, 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_component_is_clipped() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let x = nnls(&a, &b, 1e-12);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_columns_stay_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 3.0]);
        let x = nnls(&a, &b, 1e-12);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
    }
}
