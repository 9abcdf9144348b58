use nalgebra::DMatrix;

use crate::datasets::Grid;
use crate::error::{Error, Result};
use crate::models::{forward_batch, ModelParams};
use crate::oracle::OperatorMatrix;

/// Condition number above which a weight matrix is not inverted.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    /// `W^-1`, present only when `W` is well conditioned.
    pub inverse: Option<DMatrix<f64>>,
    /// `sigma_max / sigma_min`; infinite for a singular matrix.
    pub condition: f64,
    pub bandedness: Option<f64>,
}

impl Inversion {
    pub fn invertible(&self) -> bool {
        self.inverse.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// Column `j` is `model(e_j)`.
    pub raw: DMatrix<f64>,
    /// Column `j` is `model(e_j) - model(0)`.
    pub debiased: DMatrix<f64>,
    pub reference: DMatrix<f64>,
    /// `|debiased - reference|_F / |reference|_F`.
    pub rel_error: f64,
    pub inversion: Inversion,
}

/// Reads the effective linear response of a model off one-hot inputs.
pub fn probe_greens(params: &ModelParams, grid: &Grid, reference: &OperatorMatrix) -> Result<ProbeResult> {
    let m = grid.m();
    if reference.rows() != m || reference.cols() != m {
        return Err(Error::ShapeMismatch(format!(
            "reference is {}x{}, grid has {m} interior nodes",
            reference.rows(),
            reference.cols()
        )));
    }
    let raw = forward_batch(params, &DMatrix::identity(m, m), grid)?;
    let bias = forward_batch(params, &DMatrix::zeros(m, 1), grid)?;
    let mut debiased = raw.clone();
    for mut col in debiased.column_iter_mut() {
        col -= &bias.column(0);
    }
    let rel_error = (&debiased - &reference.data).norm() / reference.data.norm();
    let inversion = invert_weights(&debiased)?;
    Ok(ProbeResult {
        raw,
        debiased,
        reference: reference.data.clone(),
        rel_error,
        inversion,
    })
}

/// Share of the squared Frobenius mass within one diagonal of the main one.
/// The zero matrix counts as banded.
pub fn bandedness(m: &DMatrix<f64>) -> f64 {
    let total = m.norm_squared();
    if total == 0.0 {
        return 1.0;
    }
    let mut band = 0.0;
    for j in 0..m.ncols() {
        for i in j.saturating_sub(1)..(j + 2).min(m.nrows()) {
            band += m[(i, j)] * m[(i, j)];
        }
    }
    (band / total).clamp(0.0, 1.0)
}

/// Inverts `W` when its condition number is below [`CONDITION_LIMIT`].
pub fn invert_weights(w: &DMatrix<f64>) -> Result<Inversion> {
    if !w.is_square() || w.is_empty() {
        return Err(Error::ShapeMismatch(format!("cannot invert a {}x{} matrix", w.nrows(), w.ncols())));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("weights are not finite".into()));
    }
    let sv = w.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < CONDITION_LIMIT) {
        return Ok(Inversion {
            inverse: None,
            condition,
            bandedness: None,
        });
    }
    let inverse = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Solver("LU factorization failed on a well-conditioned matrix".into()))?;
    Ok(Inversion {
        bandedness: Some(bandedness(&inverse)),
        inverse: Some(inverse),
        condition,
    })
}
