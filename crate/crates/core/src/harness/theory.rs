use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mse;
use crate::datasets::{generate_dataset, Family, FunctionClass};
use crate::error::{Error, Result};
use crate::models::{fit_fd_parameter, train, ModelKind, ModelParams, TrainConfig};
use crate::oracle::{
    assemble_basis, assemble_green_matrix, orthonormal_range, predict_fd_w, projected_green_operator, tight_error,
    PsiBasis,
};

/// Data used by the theory comparison and the grid sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheorySetup {
    pub n_examples: usize,
    pub seed: u64,
    pub k: f64,
}

impl Default for TheorySetup {
    fn default() -> Self {
        Self {
            n_examples: 1000,
            seed: 0,
            k: 1.0,
        }
    }
}

/// One polynomial order of the theory comparison. Linear errors are relative
/// to `|A|_F` with `A` the hat-basis Green's matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub p: usize,
    /// `|W_T - A|_F / |A|_F` after theorem-mode training.
    pub linear_empirical: f64,
    /// `tight_error(A, U, 0)`.
    pub linear_predicted: f64,
    /// `|W_T - A_p|_F / |A|_F` with `A_p` the operator restricted to the
    /// training span; zero up to rounding when training reaches its fixed point.
    pub linear_fixed_point: f64,
    /// Fitted `|w - k| / k`.
    pub fd_empirical: f64,
    /// Predicted `|w - k| / k`.
    pub fd_predicted: f64,
}

/// Empirical versus predicted errors of the linear model and the
/// finite-difference fit on Poly[p] data, per `p`.
pub fn theory_comparison(p_range: &[usize], n_grid: usize, q: usize, setup: &TheorySetup) -> Result<Vec<TheoryRow>> {
    if p_range.is_empty() {
        return Err(Error::Config("empty polynomial order list".into()));
    }
    let rows: Result<Vec<TheoryRow>> = p_range
        .par_iter()
        .map(|&p| {
            let d = generate_dataset(FunctionClass::poly(p), n_grid, setup.n_examples, setup.seed, setup.k)?;
            let a = assemble_green_matrix(&d.grid, PsiBasis::HatLinear, setup.k)?;
            let (params, _) = train(ModelKind::Linear, &d, &TrainConfig::theorem())?;
            let ModelParams::Linear { w } = params else { unreachable!() };
            let u = orthonormal_range(&assemble_basis(Family::Polynomial, p, &d.grid))?;
            let a_p = projected_green_operator(Family::Polynomial, p, &d.grid, setup.k)?;
            let zero = DMatrix::zeros(d.m(), d.m());
            let fit = fit_fd_parameter(&d, q)?;
            let law = predict_fd_w(p, q, d.grid.dx(), setup.k)?;
            let an = a.data.norm();
            Ok(TheoryRow {
                p,
                linear_empirical: (&w - &a.data).norm() / an,
                linear_predicted: tight_error(&a, &u, &zero)?,
                linear_fixed_point: (&w - &a_p.data).norm() / an,
                fd_empirical: (fit - setup.k).abs() / setup.k,
                fd_predicted: law.abs_error(),
            })
        })
        .collect();
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: usize,
    pub n_grid: usize,
    pub p: usize,
    pub w: f64,
    /// Prediction MSE of the fitted stencil on its training data.
    pub train_mse: f64,
    pub rel_error: f64,
}

/// Finite-difference fits over every `(q, n_grid, p)` combination, in that
/// nesting order.
pub fn fd_grid_sweep(q_list: &[usize], n_grid_list: &[usize], p_list: &[usize], setup: &TheorySetup) -> Result<Vec<SweepRow>> {
    if q_list.is_empty() || n_grid_list.is_empty() || p_list.is_empty() {
        return Err(Error::Config("sweep lists must be non-empty".into()));
    }
    let combos: Vec<(usize, usize, usize)> = q_list
        .iter()
        .flat_map(|&q| n_grid_list.iter().flat_map(move |&n| p_list.iter().map(move |&p| (q, n, p))))
        .collect();
    combos
        .par_iter()
        .map(|&(q, n_grid, p)| {
            let d = generate_dataset(FunctionClass::poly(p), n_grid, setup.n_examples, setup.seed, setup.k)?;
            let w = fit_fd_parameter(&d, q)?;
            Ok(SweepRow {
                q,
                n_grid,
                p,
                w,
                train_mse: mse(&ModelParams::FdFit { q, w }, &d)?,
                rel_error: (w - setup.k).abs() / setup.k,
            })
        })
        .collect()
}

/// Least-squares slope of `log err` against `log dx`.
pub fn fit_convergence_order(dx: &[f64], err: &[f64]) -> Result<f64> {
    if dx.len() != err.len() {
        return Err(Error::ShapeMismatch(format!("{} step sizes but {} errors", dx.len(), err.len())));
    }
    if dx.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 points, got {}", dx.len())));
    }
    if let Some(bad) = dx.iter().chain(err).find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("logarithm of non-positive value {bad}")));
    }
    let x = DVector::from_iterator(dx.len(), dx.iter().map(|v| v.ln()));
    let y = DVector::from_iterator(err.len(), err.iter().map(|v| v.ln()));
    let xm = x.mean();
    let ym = y.mean();
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all step sizes are equal".into()));
    }
    let sxy: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - xm) * (b - ym)).sum();
    Ok(sxy / sxx)
}
