//! White-box finite-difference model: `w * FD_q(u) = -f`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::oracle::stencil;

/// Applies the order-`q` second-difference stencil to interior values `u`.
///
/// Values beyond the vector are the boundary values `(left, right)` at
/// `x = 0` and `x = 1`. FD2 covers every interior node; FD4 skips the two
/// nodes next to the boundary, whose stencil would reach outside `[0, 1]`.
/// Returns the estimates and the index range of the nodes they belong to.
pub fn fd_stencil_apply_with_boundary(
    u: &[f64],
    dx: f64,
    q: usize,
    boundary: (f64, f64),
) -> Result<(Vec<f64>, Range<usize>)> {
    let st = stencil(q)?;
    let reach = q / 2;
    let len = u.len();
    // Nodes need `reach` neighbours on each side, one of which may be virtual.
    let support = (reach - 1)..len.saturating_sub(reach - 1);
    if support.is_empty() {
        return Err(Error::TooShort { len, width: q + 1 });
    }
    let at = |i: isize| -> f64 {
        if i < 0 {
            boundary.0
        } else if i as usize >= len {
            boundary.1
        } else {
            u[i as usize]
        }
    };
    let scale = 1.0 / (st.denom * dx * dx);
    let values = support
        .clone()
        .map(|i| {
            st.taps
                .iter()
                .map(|&(o, w)| w as f64 * at(i as isize + o as isize))
                .sum::<f64>()
                * scale
        })
        .collect();
    Ok((values, support))
}

/// `fd_stencil_apply_with_boundary` with homogeneous Dirichlet values.
pub fn fd_stencil_apply(u: &[f64], dx: f64, q: usize) -> Result<(Vec<f64>, Range<usize>)> {
    fd_stencil_apply_with_boundary(u, dx, q, (0.0, 0.0))
}

/// Sums `sum <d, f>` and `sum <d, d>` over all samples and supported nodes.
fn normal_equations(dataset: &Dataset, q: usize) -> Result<(f64, f64)> {
    let dx = dataset.grid.dx();
    let mut df = 0.0;
    let mut dd = 0.0;
    for n in 0..dataset.len() {
        let (u, f) = (dataset.u.column(n), dataset.f.column(n));
        let (d, range) = fd_stencil_apply(u.as_slice(), dx, q)?;
        let f = &f.as_slice()[range];
        for (di, fi) in d.iter().zip(f) {
            df += di * fi;
            dd += di * di;
        }
    }
    Ok((df, dd))
}

/// Least-squares `w = -sum <d, f> / sum <d, d>` minimizing `sum |w d + f|^2`.
pub fn fit_fd_parameter(dataset: &Dataset, q: usize) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidSpec("cannot fit an empty dataset".into()));
    }
    let (df, dd) = normal_equations(dataset, q)?;
    if dd == 0.0 {
        return Err(Error::DegenerateFit);
    }
    Ok(-df / dd)
}

/// Mean of `(w d + f)^2` over samples and supported nodes.
pub fn fd_residual_mse(w: f64, dataset: &Dataset, q: usize) -> Result<f64> {
    let dx = dataset.grid.dx();
    let mut sum = 0.0;
    let mut count = 0usize;
    for n in 0..dataset.len() {
        let (u, f) = (dataset.u.column(n), dataset.f.column(n));
        let (d, range) = fd_stencil_apply(u.as_slice(), dx, q)?;
        let f = &f.as_slice()[range];
        for (di, fi) in d.iter().zip(f) {
            sum += (w * di + fi).powi(2);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Matrix `L` with `L u ~ u''` on every interior node (zero boundaries).
///
/// FD4 rows fall back to FD2 at the two nodes next to the boundary.
pub fn fd_operator(m: usize, dx: f64, q: usize) -> Result<DMatrix<f64>> {
    let reach = q / 2;
    let mut l = DMatrix::zeros(m, m);
    for i in 0..m {
        let order = if i + 1 < reach || i + reach > m { 2 } else { q };
        let st = stencil(order)?;
        for &(o, w) in st.taps {
            let j = i as isize + o as isize;
            if j >= 0 && (j as usize) < m {
                l[(i, j as usize)] = w as f64 / (st.denom * dx * dx);
            }
        }
    }
    Ok(l)
}

/// Solves `-w L u = f` for `u`.
pub fn fd_solve(w: f64, q: usize, f: &DVector<f64>, dx: f64) -> Result<DVector<f64>> {
    let l = fd_operator(f.len(), dx, q)? * (-w);
    l.lu()
        .solve(f)
        .ok_or_else(|| Error::Solver(format!("finite-difference operator with w = {w} is singular")))
}
