//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Solves `T x = rhs` where `T` has sub-diagonal `lower`, diagonal `main` and
/// super-diagonal `upper` (`lower[i]` couples row `i + 1` to column `i`).
///
/// No pivoting; intended for diagonally dominant or SPD systems.
pub fn solve(lower: &[f64], main: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = main.len();
    if n == 0 || rhs.len() != n || lower.len() + 1 != n || upper.len() + 1 != n {
        return Err(Error::ShapeMismatch(format!(
            "tridiagonal system with {} diagonal entries, {}/{} off-diagonal, rhs {}",
            n,
            lower.len(),
            upper.len(),
            rhs.len()
        )));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let pivot = |v: f64, row: usize| -> Result<f64> {
        if v == 0.0 || !v.is_finite() {
            Err(Error::Solver(format!("zero pivot at row {row}")))
        } else {
            Ok(v)
        }
    };
    let mut denom = pivot(main[0], 0)?;
    if n > 1 {
        c[0] = upper[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = pivot(main[i] - lower[i - 1] * c[i - 1], i)?;
        if i + 1 < n {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Symmetric Toeplitz tridiagonal solve: constant `diag` and `off`.
pub fn solve_toeplitz(diag: f64, off: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let side = vec![off; n.saturating_sub(1)];
    solve(&side, &vec![diag; n], &side, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_by_four_residual() {
        let x = solve(&[1.0, 1.0, 1.0], &[2.0; 4], &[1.0, 1.0, 1.0], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = [
            2.0 * x[0] + x[1] - 1.0,
            x[0] + 2.0 * x[1] + x[2],
            x[1] + 2.0 * x[2] + x[3],
            x[2] + 2.0 * x[3] - 1.0,
        ];
        assert!(r.iter().all(|v| v.abs() < 1e-14), "{r:?}");
    }

    #[test]
    fn nonsymmetric_system() {
        let lower = [3.0, 1.0, 3.0];
        let main = [10.0, 10.0, 7.0, 4.0];
        let upper = [2.0, 4.0, 5.0];
        let rhs = [3.0, 4.0, 5.0, 6.0];
        let x = solve(&lower, &main, &upper, &rhs).unwrap();
        for i in 0..4 {
            let mut acc = main[i] * x[i];
            if i > 0 {
                acc += lower[i - 1] * x[i - 1];
            }
            if i < 3 {
                acc += upper[i] * x[i + 1];
            }
            assert!((acc - rhs[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn single_unknown() {
        assert_eq!(solve(&[], &[4.0], &[], &[2.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn zero_pivot_is_reported() {
        assert!(matches!(
            solve_toeplitz(0.0, 1.0, &[1.0, 1.0]),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn shape_errors() {
        assert!(solve(&[1.0], &[1.0, 1.0], &[], &[1.0, 1.0]).is_err());
    }
}
