//! Experiments: cross-generalization grids, theory comparisons, Green's
//! function probes, grid sweeps and their reports.

mod crosseval;
mod probe;
mod report;
mod theory;

pub use crosseval::{contained, cross_eval, CellMeta, EvalGrid, FamilyGrid, RowMeta};
pub use probe::{bandedness, invert_weights, probe_greens, Inversion, ProbeResult, CONDITION_LIMIT};
pub use report::{emit_csv, emit_heatmap, emit_report, subspace_violations, Violation, COLOR_LIMITS};
pub use theory::{fd_grid_sweep, fit_convergence_order, theory_comparison, SweepRow, TheoryRow, TheorySetup};

use crate::datasets::Dataset;
use crate::error::Result;
use crate::models::{forward_batch, ModelParams};

/// Tolerance factor for "test error no worse than train error".
pub const WIGGLE_ROOM: f64 = 10.0;

/// Mean over samples and nodes of the squared prediction error.
///
/// Unlike the training objective of the finite-difference model this always
/// compares `model(f)` against `u`.
pub fn mse(params: &ModelParams, dataset: &Dataset) -> Result<f64> {
    let y = forward_batch(params, &dataset.f, &dataset.grid)?;
    Ok((y - &dataset.u).norm_squared() / (dataset.m() * dataset.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_dataset, FunctionClass};
    use crate::error::Error;
    use crate::models::{init_model, InitScheme, ModelKind};
    use crate::oracle::{assemble_green_matrix, PsiBasis};

    #[test]
    fn green_matrix_is_exact_on_fem_data() {
        let d = generate_dataset(FunctionClass::fem(), 22, 50, 0, 1.0).unwrap();
        let w = assemble_green_matrix(&d.grid, PsiBasis::HatLinear, 1.0).unwrap().data;
        assert!(mse(&ModelParams::Linear { w }, &d).unwrap() < 1e-20);
    }

    #[test]
    fn zero_model_scores_the_solution_energy() {
        let d = generate_dataset(FunctionClass::sine(3), 16, 40, 1, 1.0).unwrap();
        let zero = init_model(ModelKind::Linear, 15, 0, InitScheme::Zeros);
        let expect = d.u.norm_squared() / (15.0 * 40.0);
        let got = mse(&zero, &d).unwrap();
        assert!((got - expect).abs() < 1e-15 * expect);
        assert_eq!(got, mse(&zero, &d).unwrap());
    }

    #[test]
    fn grid_mismatch_is_incompatible() {
        let d = generate_dataset(FunctionClass::poly(2), 16, 10, 1, 1.0).unwrap();
        let p = init_model(ModelKind::Mlp, 21, 0, InitScheme::FanInUniform);
        assert!(matches!(mse(&p, &d), Err(Error::Incompatible(_))));
    }
}
