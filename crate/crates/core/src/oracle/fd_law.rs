//! Optimal finite-difference coefficient for polynomial data.
//!
//! The fitted `w` minimizes `E int_0^1 (w FD_q(u) + f)^2 dx` over random
//! polynomial data with `-k u'' = f`. The loss is quadratic in `w`, so the
//! optimum is a ratio of two expectations. With independent zero-mean
//! coefficients the expectations reduce to sums over basis terms, and each
//! term is a polynomial integral evaluated exactly by Gauss-Legendre.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Which coefficients are independent in the random polynomial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FdPrior {
    /// `u = sum_{n=0}^{p+2} c_n x^n` with iid `c_n`; boundary conditions ignored.
    #[default]
    SolutionCoefficients,
    /// `f = sum_{m=0}^{p} c_m x^m` with iid `c_m`; `u` the Dirichlet solution.
    ForcingCoefficients,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdErrorLaw {
    pub q: usize,
    pub p: usize,
    pub dx: f64,
    pub k: f64,
    pub predicted_w: f64,
    /// Signed `(w - k) / k`.
    pub relative_error: f64,
}

impl FdErrorLaw {
    pub fn abs_error(&self) -> f64 {
        self.relative_error.abs()
    }
}

/// Second-derivative stencil: integer taps at offsets, divided by `denom * dx^2`.
pub(crate) struct Stencil {
    pub taps: &'static [(i32, i64)],
    pub denom: f64,
}

pub(crate) fn stencil(q: usize) -> Result<Stencil> {
    match q {
        2 => Ok(Stencil {
            taps: &[(-1, 1), (0, -2), (1, 1)],
            denom: 1.0,
        }),
        4 => Ok(Stencil {
            taps: &[(-2, -1), (-1, 16), (0, -30), (1, 16), (2, -1)],
            denom: 12.0,
        }),
        _ => Err(Error::UnsupportedStencil(q)),
    }
}

fn binomial(n: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Ascending coefficients of `FD_q(x^n)` as a polynomial in `x`.
fn fd_of_monomial(n: usize, q: usize, dx: f64) -> Result<Vec<f64>> {
    let st = stencil(q)?;
    let mut out = vec![0.0; n + 1];
    // (x + o dx)^n = sum_j C(n, j) (o dx)^j x^(n-j); j = 0, 1 cancel. Integer
    // moments keep the cancellations exact.
    for j in 2..=n {
        let moment: i64 = st.taps.iter().map(|&(o, w)| w * i64::from(o).pow(j as u32)).sum();
        out[n - j] = binomial(n, j) * moment as f64 / st.denom * dx.powi(j as i32 - 2);
    }
    Ok(out)
}

/// Ascending coefficients of `(x^n)'' = n (n-1) x^(n-2)`.
fn second_derivative_of_monomial(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if n >= 2 {
        out[n - 2] = (n * (n - 1)) as f64;
    }
    out
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Predicted optimal `w` under the default prior.
pub fn predict_fd_w(p: usize, q: usize, dx: f64, k: f64) -> Result<FdErrorLaw> {
    predict_fd_w_with(p, q, dx, k, FdPrior::default())
}

pub fn predict_fd_w_with(p: usize, q: usize, dx: f64, k: f64, prior: FdPrior) -> Result<FdErrorLaw> {
    stencil(q)?;
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(Error::Domain(format!("dx must be positive, got {dx}")));
    }
    if !(k > 0.0) {
        return Err(Error::Domain(format!("k must be positive, got {k}")));
    }
    // Per basis term: the stencil response `d` and the exact `u''` it should match.
    let mut terms: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    match prior {
        FdPrior::SolutionCoefficients => {
            for n in 2..=p + 2 {
                terms.push((fd_of_monomial(n, q, dx)?, second_derivative_of_monomial(n)));
            }
        }
        FdPrior::ForcingCoefficients => {
            // f = x^m gives u = (x - x^(m+2)) / ((m+1)(m+2)); the linear part is
            // invisible to both operators.
            for m in 0..=p {
                let s = -1.0 / ((m + 1) * (m + 2)) as f64;
                let d = fd_of_monomial(m + 2, q, dx)?.into_iter().map(|c| c * s).collect();
                let t = second_derivative_of_monomial(m + 2).into_iter().map(|c| c * s).collect();
                terms.push((d, t));
            }
        }
    }
    let (nodes, weights) = gauss_legendre((2 * p + 5).div_ceil(2));
    let mut cross = 0.0;
    let mut self_term = 0.0;
    for (d, t) in &terms {
        for (&x, &w) in nodes.iter().zip(&weights) {
            let dv = horner(d, x);
            cross += w * dv * horner(t, x);
            self_term += w * dv * dv;
        }
    }
    // Loss per unit variance: int (w d - k t)^2, minimized at w = k <d,t>/<d,d>.
    let predicted_w = k * (cross / self_term);
    Ok(FdErrorLaw {
        q,
        p,
        dx,
        k,
        predicted_w,
        relative_error: (predicted_w - k) / k,
    })
}

/// Reference closed form of the signed relative error for `p = 2`, `q = 2`.
pub fn fd_error_p2(dx: f64) -> f64 {
    let d2 = dx * dx;
    d2 * (-245.0 * d2 - 315.0) / (245.0 * d2 * d2 + 630.0 * d2 + 669.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rational form of the optimum for `p = 2`, `q = 2` under each prior,
    /// obtained by integrating the quadratic loss symbolically by hand.
    fn w_p2_solution_prior(d: f64) -> f64 {
        let d2 = d * d;
        (56.0 + 10.0 * d2) / (56.0 + 20.0 * d2 + 5.0 * d2 * d2)
    }

    fn w_p2_forcing_prior(d: f64) -> f64 {
        let d2 = d * d;
        (276.0 + 10.0 * d2) / (276.0 + 20.0 * d2 + 5.0 * d2 * d2)
    }

    #[test]
    fn exact_below_stencil_order() {
        for (p, q) in [(0, 2), (1, 2), (0, 4), (1, 4), (2, 4), (3, 4)] {
            for dx in [1.0, 0.3, 1.0 / 22.0] {
                for prior in [FdPrior::SolutionCoefficients, FdPrior::ForcingCoefficients] {
                    let law = predict_fd_w_with(p, q, dx, 3.0, prior).unwrap();
                    assert_eq!(law.relative_error, 0.0, "p={p} q={q} dx={dx}");
                    assert_eq!(law.predicted_w, 3.0);
                }
            }
        }
    }

    #[test]
    fn quadratic_data_matches_hand_derivation() {
        for dx in [1.0, 0.5, 1.0 / 8.0, 1.0 / 22.0, 1.0 / 64.0] {
            let a = predict_fd_w(2, 2, dx, 1.0).unwrap();
            assert!((a.predicted_w - w_p2_solution_prior(dx)).abs() < 1e-14);
            let b = predict_fd_w_with(2, 2, dx, 2.5, FdPrior::ForcingCoefficients).unwrap();
            assert!((b.predicted_w / 2.5 - w_p2_forcing_prior(dx)).abs() < 1e-14);
        }
    }

    #[test]
    fn halving_dx_quarters_fd2_error() {
        for dx in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
            let a = predict_fd_w(3, 2, dx, 1.0).unwrap().abs_error();
            let b = predict_fd_w(3, 2, dx / 2.0, 1.0).unwrap().abs_error();
            let ratio = a / b;
            assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
        }
    }

    #[test]
    fn fd4_error_is_fourth_order() {
        let a = predict_fd_w(5, 4, 1.0 / 16.0, 1.0).unwrap().abs_error();
        let b = predict_fd_w(5, 4, 1.0 / 32.0, 1.0).unwrap().abs_error();
        assert!((a / b - 16.0).abs() < 1.6, "ratio {}", a / b);
    }

    #[test]
    fn error_grows_with_order() {
        let dx = 1.0 / 22.0;
        let errors: Vec<f64> = (2..=8)
            .map(|p| predict_fd_w(p, 2, dx, 1.0).unwrap().abs_error())
            .collect();
        assert!(errors.windows(2).all(|w| w[1] >= w[0]), "{errors:?}");
    }

    #[test]
    fn reference_rational() {
        assert!((fd_error_p2(1.0) - (-560.0 / 1544.0)).abs() < 1e-15);
        assert!(fd_error_p2(1e-6).abs() < 1e-11);
        assert!(fd_error_p2(1e-6) < 0.0);
    }

    #[test]
    fn unsupported_inputs() {
        assert!(matches!(predict_fd_w(2, 3, 0.1, 1.0), Err(Error::UnsupportedStencil(3))));
        assert!(predict_fd_w(2, 2, 0.0, 1.0).is_err());
        assert!(predict_fd_w(2, 2, 0.1, -1.0).is_err());
    }
}
