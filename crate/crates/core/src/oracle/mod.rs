//! Theoretical predictions: the discrete Green's operator, subspace
//! projections, the gradient-descent fixed point and error bounds.

mod fd_law;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datasets::{solve_closed_form, Family, ForcingSpec, Grid};
use crate::error::{Error, Result};
use crate::quadrature::simpson;

pub(crate) use fd_law::stencil;
pub use fd_law::{fd_error_p2, predict_fd_w, predict_fd_w_with, FdErrorLaw, FdPrior};

/// Relative singular value below which a direction is treated as null.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    GreenA,
    BasisB,
    OrthoU,
    WeightsW,
    StencilL,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::GreenA => "green-a",
            Role::BasisB => "basis-b",
            Role::OrthoU => "ortho-u",
            Role::WeightsW => "weights-w",
            Role::StencilL => "stencil-l",
        };
        f.write_str(s)
    }
}

/// Dense matrix tagged with what it represents.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub role: Role,
    pub data: DMatrix<f64>,
}

impl OperatorMatrix {
    /// Validates finiteness plus the role's structural property: `U^T U = I`
    /// for `OrthoU`, symmetry for `GreenA`.
    pub fn new(role: Role, data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("{role} matrix has non-finite entries")));
        }
        match role {
            Role::OrthoU => {
                let gram = data.transpose() * &data;
                let err = (gram - DMatrix::identity(data.ncols(), data.ncols())).amax();
                if err > 1e-10 {
                    return Err(Error::InvalidSpec(format!(
                        "columns are not orthonormal (deviation {err:e})"
                    )));
                }
            }
            Role::GreenA => {
                if !data.is_square() {
                    return Err(Error::ShapeMismatch(format!(
                        "Green's matrix must be square, got {}x{}",
                        data.nrows(),
                        data.ncols()
                    )));
                }
                let asym = (&data - data.transpose()).amax();
                if asym > 1e-10 * data.amax().max(f64::MIN_POSITIVE) {
                    return Err(Error::InvalidSpec(format!(
                        "Green's matrix is not symmetric (deviation {asym:e})"
                    )));
                }
            }
            _ => {}
        }
        Ok(Self { role, data })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    /// `U U^T`, the orthogonal projector onto the columns of an `OrthoU`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.data * self.data.transpose()
    }
}

/// `G(s, x)` of `-u'' = f` with homogeneous Dirichlet conditions on `[0, 1]`.
pub fn greens_value(s: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("G({s}, {x}) needs both arguments in [0, 1]")));
    }
    Ok(if x < s { (1.0 - s) * x } else { (1.0 - x) * s })
}

fn green(s: f64, x: f64) -> f64 {
    if x < s {
        (1.0 - s) * x
    } else {
        (1.0 - x) * s
    }
}

/// Interpolation basis `psi_j` used to turn nodal forcing into a function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PsiBasis {
    #[default]
    HatLinear,
    PiecewiseConstant,
}

/// `A_ij = (1/k) int psi_j(s) G(s, x_i) ds`.
///
/// Each integral is split at the basis breakpoints and at `x_i`, so the
/// integrand is a polynomial of degree at most two on every piece and one
/// Simpson panel per piece is exact.
pub fn assemble_green_matrix(grid: &Grid, basis: PsiBasis, k: f64) -> Result<OperatorMatrix> {
    if !(k > 0.0) {
        return Err(Error::InvalidSpec(format!("k must be positive, got {k}")));
    }
    let m = grid.m();
    let dx = grid.dx();
    let x = grid.nodes();
    let mut a = DMatrix::zeros(m, m);
    for j in 0..m {
        let (lo, hi) = match basis {
            PsiBasis::HatLinear => (x[j] - dx, x[j] + dx),
            PsiBasis::PiecewiseConstant => ((x[j] - dx / 2.0).max(0.0), (x[j] + dx / 2.0).min(1.0)),
        };
        let psi = |s: f64| match basis {
            PsiBasis::HatLinear => (1.0 - (s - x[j]).abs() / dx).max(0.0),
            PsiBasis::PiecewiseConstant => 1.0,
        };
        for i in 0..m {
            let mut cuts = vec![lo, x[j], hi];
            if x[i] > lo && x[i] < hi {
                cuts.push(x[i]);
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            a[(i, j)] = cuts
                .windows(2)
                .map(|w| simpson(|s| psi(s) * green(s, x[i]), w[0], w[1], 2))
                .sum::<f64>()
                / k;
        }
    }
    // Quadrature round-off is the only asymmetry; remove it.
    let a = (&a + a.transpose()) * 0.5;
    OperatorMatrix::new(Role::GreenA, a)
}

/// Nodal evaluations of the family's basis functions, one per column.
pub fn assemble_basis(family: Family, p: usize, grid: &Grid) -> OperatorMatrix {
    let x = grid.nodes();
    let m = grid.m();
    let data = match family {
        Family::Polynomial => DMatrix::from_fn(m, p + 1, |i, j| x[i].powi(j as i32)),
        Family::Sine => DMatrix::from_fn(m, p, |i, j| ((j + 1) as f64 * std::f64::consts::PI * x[i]).sin()),
        Family::Cosine => DMatrix::from_fn(m, p, |i, j| ((j + 1) as f64 * std::f64::consts::PI * x[i]).cos()),
        Family::FemPiecewiseLinear => DMatrix::identity(m, m),
    };
    OperatorMatrix {
        role: Role::BasisB,
        data,
    }
}

/// Left singular vectors of `B` with `sigma > RANK_TOL * sigma_max`.
pub fn orthonormal_range(b: &OperatorMatrix) -> Result<OperatorMatrix> {
    let svd = b.data.clone().svd(true, false);
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) {
        return Err(Error::RankZero);
    }
    let u = svd.u.expect("left singular vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_TOL * sigma_max)
        .collect();
    let mut cols = DMatrix::zeros(b.rows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        cols.set_column(c, &u.column(i));
    }
    OperatorMatrix::new(Role::OrthoU, cols)
}

/// `A U U^T` for the operator that generated the family's data.
///
/// Smooth families carry their own interpolation basis: every column of `B`
/// is mapped to the nodal values of its exact solution, and the map is
/// extended by `B^+`, so the result acts exactly on `range(B)` and vanishes
/// on its complement. FEM data is generated by the hat-basis operator, whose
/// range is everything.
pub fn projected_green_operator(family: Family, p: usize, grid: &Grid, k: f64) -> Result<OperatorMatrix> {
    if !family.is_smooth() {
        return assemble_green_matrix(grid, PsiBasis::HatLinear, k);
    }
    let b = assemble_basis(family, p, grid);
    let m = grid.m();
    let mut solutions = DMatrix::zeros(m, b.cols());
    for j in 0..b.cols() {
        let spec = match family {
            Family::Polynomial => {
                let mut c = vec![0.0; j + 1];
                c[j] = 1.0;
                ForcingSpec {
                    family,
                    order_p: j,
                    coefficients: c,
                    k,
                }
            }
            _ => {
                let mut c = vec![0.0; j + 1];
                c[j] = 1.0;
                ForcingSpec {
                    family,
                    order_p: j + 1,
                    coefficients: c,
                    k,
                }
            }
        };
        solutions.set_column(j, &solve_closed_form(&spec, grid)?.u);
    }
    let svd = b.data.svd(true, true);
    let tol = RANK_TOL * svd.singular_values.max();
    let pinv = svd.pseudo_inverse(tol).map_err(|e| Error::Solver(e.to_string()))?;
    OperatorMatrix::new(Role::WeightsW, solutions * pinv)
}

fn check_square(name: &str, a: &DMatrix<f64>, m: usize) -> Result<()> {
    if a.nrows() != m || a.ncols() != m {
        return Err(Error::ShapeMismatch(format!(
            "{name} is {}x{}, expected {m}x{m}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Gradient-descent fixed point `A U U^T + W0 (I - U U^T)`.
pub fn predict_w_star(
    a: &OperatorMatrix,
    u: &OperatorMatrix,
    w0: &DMatrix<f64>,
) -> Result<OperatorMatrix> {
    let m = a.rows();
    check_square("A", &a.data, m)?;
    check_square("W0", w0, m)?;
    if u.rows() != m {
        return Err(Error::ShapeMismatch(format!("U has {} rows, expected {m}", u.rows())));
    }
    let proj = u.projector();
    let w = &a.data * &proj + w0 * (DMatrix::identity(m, m) - proj);
    OperatorMatrix::new(Role::WeightsW, w)
}

/// Loose bound `sqrt(M - r) (|W0|_F / |A|_F + 1)` on `|W* - A|_F / |A|_F`,
/// where `r` is the dimension of the training subspace.
pub fn error_bounds(w0: &DMatrix<f64>, a: &OperatorMatrix, r: usize, m: usize) -> Result<f64> {
    if r > m {
        return Err(Error::Domain(format!("subspace dimension {r} exceeds M = {m}")));
    }
    check_square("A", &a.data, m)?;
    check_square("W0", w0, m)?;
    Ok(((m - r) as f64).sqrt() * (w0.norm() / a.data.norm() + 1.0))
}

/// `|(W0 - A)(I - U U^T)|_F / |A|_F`, which equals `|W* - A|_F / |A|_F`.
pub fn tight_error(a: &OperatorMatrix, u: &OperatorMatrix, w0: &DMatrix<f64>) -> Result<f64> {
    let m = a.rows();
    check_square("A", &a.data, m)?;
    check_square("W0", w0, m)?;
    if u.rows() != m {
        return Err(Error::ShapeMismatch(format!("U has {} rows, expected {m}", u.rows())));
    }
    let complement = DMatrix::identity(m, m) - u.projector();
    Ok(((w0 - &a.data) * complement).norm() / a.data.norm())
}

/// Stiffness `(k/dx) tridiag(-1, 2, -1)` on the interior nodes.
pub fn stiffness_matrix(grid: &Grid, k: f64) -> DMatrix<f64> {
    let s = k / grid.dx();
    tridiagonal(grid.m(), -s, 2.0 * s)
}

/// Consistent mass `(dx/6) tridiag(1, 4, 1)` on the interior nodes.
pub fn mass_matrix(grid: &Grid) -> DMatrix<f64> {
    let c = grid.dx() / 6.0;
    tridiagonal(grid.m(), c, 4.0 * c)
}

fn tridiagonal(m: usize, off: f64, diag: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            diag
        } else if i.abs_diff(j) == 1 {
            off
        } else {
            0.0
        }
    })
}
