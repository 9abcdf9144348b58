//! Exact Poisson datasets over restricted forcing subspaces.
//!
//! Every sample pairs nodal forcing values `f(x_i)` with the exact solution
//! `u(x_i)` of `-k u'' = f`, `u(0) = u(1) = 0`, on the interior nodes of a
//! uniform grid. Boundary nodes are dropped from the vectors because `u`
//! vanishes there identically.

mod io;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tridiag;

pub use io::{read_dataset, write_dataset, DatasetManifest, DATASET_SCHEMA_VERSION};

/// Uniform grid on `[0, 1]`, interior nodes only.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_grid: usize,
    dx: f64,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(n_grid: usize) -> Result<Self> {
        if n_grid < 2 {
            return Err(Error::InvalidGrid(n_grid));
        }
        let dx = 1.0 / n_grid as f64;
        let nodes = (1..n_grid).map(|i| i as f64 / n_grid as f64).collect();
        Ok(Self { n_grid, dx, nodes })
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Number of interior nodes, `n_grid - 1`.
    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

pub fn make_grid(n_grid: usize) -> Result<Grid> {
    Grid::new(n_grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    FemPiecewiseLinear,
    Polynomial,
    Cosine,
    Sine,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Polynomial => "poly",
            Family::Sine => "sine",
            Family::Cosine => "cos",
            Family::FemPiecewiseLinear => "fem",
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Family::FemPiecewiseLinear)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poly" | "polynomial" => Ok(Family::Polynomial),
            "sin" | "sine" => Ok(Family::Sine),
            "cos" | "cosine" => Ok(Family::Cosine),
            "fem" | "fem-piecewise-linear" | "piecewise-linear" => Ok(Family::FemPiecewiseLinear),
            other => Err(Error::InvalidSpec(format!("unknown function family '{other}'"))),
        }
    }
}

/// A family together with its order, e.g. `Poly[3]`. FEM carries `p = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FunctionClass {
    pub family: Family,
    pub p: usize,
}

impl FunctionClass {
    pub fn new(family: Family, p: usize) -> Self {
        let p = if family.is_smooth() { p } else { 0 };
        Self { family, p }
    }

    pub fn fem() -> Self {
        Self::new(Family::FemPiecewiseLinear, 0)
    }

    pub fn poly(p: usize) -> Self {
        Self::new(Family::Polynomial, p)
    }

    pub fn sine(p: usize) -> Self {
        Self::new(Family::Sine, p)
    }

    pub fn cosine(p: usize) -> Self {
        Self::new(Family::Cosine, p)
    }
}

impl fmt::Display for FunctionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::FemPiecewiseLinear => f.write_str("FEM"),
            Family::Polynomial => write!(f, "Poly[{}]", self.p),
            Family::Cosine => write!(f, "Cos[{}]", self.p),
            Family::Sine => write!(f, "Sine[{}]", self.p),
        }
    }
}

impl FromStr for FunctionClass {
    type Err = Error;

    /// Accepts `FEM`, `Poly[3]`, `poly3`, `sine:2` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let split = t
            .find(|c: char| c.is_ascii_digit() || c == '[' || c == ':')
            .unwrap_or(t.len());
        let family: Family = t[..split].parse()?;
        let digits: String = t[split..].chars().filter(char::is_ascii_digit).collect();
        if !family.is_smooth() {
            return Ok(Self::fem());
        }
        let p = digits
            .parse::<usize>()
            .map_err(|_| Error::InvalidSpec(format!("function class '{s}' needs an order")))?;
        Ok(Self::new(family, p))
    }
}

/// Symbolic description of one sampled forcing function.
///
/// `coefficients` holds monomial coefficients (ascending, length `p + 1`) for
/// polynomials, series coefficients `c_1..c_p` for sine/cosine, and the
/// `n_grid + 1` nodal values (boundary nodes included) for FEM.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub family: Family,
    pub order_p: usize,
    pub coefficients: Vec<f64>,
    pub k: f64,
}

impl ForcingSpec {
    /// Expands `prod (x - r_i)` into ascending monomial coefficients.
    pub fn polynomial_from_roots(roots: &[f64], k: f64) -> Self {
        let mut coeffs = vec![1.0];
        for &r in roots {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (j, &c) in coeffs.iter().enumerate() {
                next[j + 1] += c;
                next[j] -= r * c;
            }
            coeffs = next;
        }
        Self {
            family: Family::Polynomial,
            order_p: roots.len(),
            coefficients: coeffs,
            k,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::InvalidSpec(format!("k must be positive, got {}", self.k)));
        }
        let expected = match self.family {
            Family::Polynomial => self.order_p + 1,
            Family::Sine | Family::Cosine => self.order_p,
            Family::FemPiecewiseLinear => grid.n_grid() + 1,
        };
        if self.coefficients.len() != expected {
            return Err(Error::InvalidSpec(format!(
                "{} forcing of order {} needs {} coefficients, got {}",
                self.family,
                self.order_p,
                expected,
                self.coefficients.len()
            )));
        }
        Ok(())
    }

    /// Forcing value at `x` for the smooth families.
    pub fn eval(&self, x: f64) -> f64 {
        match self.family {
            Family::Polynomial => horner(&self.coefficients, x),
            Family::Sine => series(&self.coefficients, x, f64::sin),
            Family::Cosine => series(&self.coefficients, x, f64::cos),
            Family::FemPiecewiseLinear => {
                let n = self.coefficients.len() - 1;
                let t = (x * n as f64).clamp(0.0, n as f64);
                let i = (t.floor() as usize).min(n - 1);
                let s = t - i as f64;
                (1.0 - s) * self.coefficients[i] + s * self.coefficients[i + 1]
            }
        }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn series(coeffs: &[f64], x: f64, basis: fn(f64) -> f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * basis((i + 1) as f64 * PI * x))
        .sum()
}

/// Draws a forcing function from `family` of order `p`.
///
/// Polynomials use the root form `prod (x - r_i)`, `r_i ~ U[-1, 2]`;
/// sine/cosine series draw `c_i ~ U[-1, 1]`; FEM draws interior nodal values
/// from `N(0, 1)` and pins the two boundary values to zero.
pub fn sample_forcing<R: Rng + ?Sized>(
    family: Family,
    p: usize,
    grid: &Grid,
    k: f64,
    rng: &mut R,
) -> Result<ForcingSpec> {
    if family.is_smooth() && p == 0 {
        return Err(Error::InvalidSpec(format!("{family} forcing needs p >= 1")));
    }
    let spec = match family {
        Family::Polynomial => {
            let roots: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..2.0)).collect();
            ForcingSpec::polynomial_from_roots(&roots, k)
        }
        Family::Sine | Family::Cosine => ForcingSpec {
            family,
            order_p: p,
            coefficients: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
            k,
        },
        Family::FemPiecewiseLinear => {
            let n = grid.n_grid();
            let mut values = vec![0.0; n + 1];
            for v in &mut values[1..n] {
                *v = rng.sample(StandardNormal);
            }
            ForcingSpec {
                family,
                order_p: 0,
                coefficients: values,
                k,
            }
        }
    };
    spec.validate(grid)?;
    Ok(spec)
}

/// Nodal forcing and solution values on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub f: DVector<f64>,
    pub u: DVector<f64>,
}

/// Closed-form solution for the polynomial, sine and cosine families.
pub fn solve_closed_form(spec: &ForcingSpec, grid: &Grid) -> Result<Sample> {
    spec.validate(grid)?;
    let k = spec.k;
    let x = grid.nodes();
    let u: Vec<f64> = match spec.family {
        Family::FemPiecewiseLinear => return Err(Error::WrongSolver(spec.family.to_string())),
        Family::Polynomial => {
            // u_p = -sum a_m x^(m+2) / ((m+1)(m+2) k), then add -u_p(1) x.
            let mut up = vec![0.0; spec.coefficients.len() + 2];
            for (m, a) in spec.coefficients.iter().enumerate() {
                up[m + 2] = -a / (((m + 1) * (m + 2)) as f64 * k);
            }
            let at_one: f64 = up.iter().sum();
            up[1] -= at_one;
            x.iter().map(|&xi| horner(&up, xi)).collect()
        }
        Family::Sine => x
            .iter()
            .map(|&xi| {
                spec.coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let w = (i + 1) as f64 * PI;
                        c * (w * xi).sin() / (k * w * w)
                    })
                    .sum()
            })
            .collect(),
        Family::Cosine => {
            let particular = |xi: f64| -> f64 {
                spec.coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let w = (i + 1) as f64 * PI;
                        c * (w * xi).cos() / (k * w * w)
                    })
                    .sum()
            };
            let u0 = particular(0.0);
            let u1 = particular(1.0);
            x.iter()
                .map(|&xi| particular(xi) - u0 - (u1 - u0) * xi)
                .collect()
        }
    };
    let f: Vec<f64> = x.iter().map(|&xi| spec.eval(xi)).collect();
    Ok(Sample {
        f: DVector::from_vec(f),
        u: DVector::from_vec(u),
    })
}

/// Piecewise-linear FEM solve; nodally exact in 1D.
///
/// Stiffness `(k/dx) tridiag(-1, 2, -1)` on the interior nodes against the
/// consistent load `(dx/6) tridiag(1, 4, 1)` applied to all nodal values.
pub fn solve_fem(spec: &ForcingSpec, grid: &Grid) -> Result<Sample> {
    if spec.family != Family::FemPiecewiseLinear {
        return Err(Error::InvalidSpec(format!(
            "FEM solver called with {} forcing",
            spec.family
        )));
    }
    if spec.coefficients.len() != grid.n_grid() + 1 {
        return Err(Error::InvalidSpec(format!(
            "FEM forcing needs {} nodal values, got {}",
            grid.n_grid() + 1,
            spec.coefficients.len()
        )));
    }
    if !(spec.k > 0.0) {
        return Err(Error::Solver(format!(
            "stiffness matrix is singular or indefinite for k = {}",
            spec.k
        )));
    }
    let dx = grid.dx();
    let full = &spec.coefficients;
    let load: Vec<f64> = (1..grid.n_grid())
        .map(|i| dx / 6.0 * (full[i - 1] + 4.0 * full[i] + full[i + 1]))
        .collect();
    let s = spec.k / dx;
    let u = tridiag::solve_toeplitz(2.0 * s, -s, &load)?;
    Ok(Sample {
        f: DVector::from_column_slice(&full[1..grid.n_grid()]),
        u: DVector::from_vec(u),
    })
}

/// Dispatches to the closed-form or FEM solver.
pub fn solve(spec: &ForcingSpec, grid: &Grid) -> Result<Sample> {
    match spec.family {
        Family::FemPiecewiseLinear => solve_fem(spec, grid),
        _ => solve_closed_form(spec, grid),
    }
}

/// `N` samples stored column-wise: `f` and `u` are `M x N`.
///
/// Column-major `M x N` storage is byte-identical to the row-major `N x M`
/// layout of the on-disk payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: Grid,
    pub class: FunctionClass,
    pub seed: u64,
    pub k: f64,
    /// Scalar applied jointly to every `(f, u)` since generation.
    pub norm_scale: f64,
    pub f: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

impl Dataset {
    pub fn from_samples(
        grid: Grid,
        class: FunctionClass,
        seed: u64,
        k: f64,
        samples: &[Sample],
    ) -> Result<Self> {
        let m = grid.m();
        if samples.is_empty() {
            return Err(Error::InvalidSpec("dataset needs at least one sample".into()));
        }
        if let Some(bad) = samples.iter().find(|s| s.f.len() != m || s.u.len() != m) {
            return Err(Error::ShapeMismatch(format!(
                "sample of lengths {}/{} on a grid with {} interior nodes",
                bad.f.len(),
                bad.u.len(),
                m
            )));
        }
        let f = DMatrix::from_fn(m, samples.len(), |i, n| samples[n].f[i]);
        let u = DMatrix::from_fn(m, samples.len(), |i, n| samples[n].u[i]);
        Ok(Self {
            grid,
            class,
            seed,
            k,
            norm_scale: 1.0,
            f,
            u,
        })
    }

    pub fn len(&self) -> usize {
        self.f.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.f.ncols() == 0
    }

    pub fn m(&self) -> usize {
        self.grid.m()
    }

    pub fn sample(&self, n: usize) -> Sample {
        Sample {
            f: self.f.column(n).into_owned(),
            u: self.u.column(n).into_owned(),
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.len()).map(|n| self.sample(n))
    }

    /// Mean Euclidean norm of the solution vectors.
    pub fn mean_u_norm(&self) -> f64 {
        self.u.column_iter().map(|c| c.norm()).sum::<f64>() / self.len() as f64
    }

    /// Copy holding only the first `n` samples.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            f: self.f.columns(0, n).into_owned(),
            u: self.u.columns(0, n).into_owned(),
            ..self.clone()
        }
    }
}

/// Generates `n_examples` samples of `class`, normalized to unit mean `||u||`.
///
/// Sample `n` draws from its own stream keyed by `(seed, n)`, so the result
/// does not depend on the thread count.
pub fn generate_dataset(
    class: FunctionClass,
    n_grid: usize,
    n_examples: usize,
    seed: u64,
    k: f64,
) -> Result<Dataset> {
    let grid = Grid::new(n_grid)?;
    if n_examples == 0 {
        return Err(Error::InvalidSpec("n_examples must be at least 1".into()));
    }
    let class = FunctionClass::new(class.family, class.p);
    let samples = (0..n_examples)
        .into_par_iter()
        .map(|n| {
            let mut rng = rng::sample_stream(seed, n as u64);
            let spec = sample_forcing(class.family, class.p, &grid, k, &mut rng)?;
            solve(&spec, &grid)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(n) = samples
        .iter()
        .position(|s| s.f.iter().chain(s.u.iter()).any(|v| !v.is_finite()))
    {
        return Err(Error::Solver(format!("sample {n} of {class} is not finite")));
    }
    normalize(Dataset::from_samples(grid, class, seed, k, &samples)?)
}

/// Rescales `f` and `u` jointly by `1 / mean ||u||`.
pub fn normalize(mut dataset: Dataset) -> Result<Dataset> {
    let mean = dataset.mean_u_norm();
    if dataset.is_empty() || !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::DegenerateNormalization);
    }
    let s = 1.0 / mean;
    dataset.f *= s;
    dataset.u *= s;
    dataset.norm_scale *= s;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn grid_construction() {
        let g = make_grid(2).unwrap();
        assert_eq!(g.nodes(), &[0.5]);
        assert_eq!(g.dx(), 0.5);
        let g = make_grid(4).unwrap();
        assert_eq!(g.nodes(), &[0.25, 0.5, 0.75]);
        let g = make_grid(22).unwrap();
        assert_eq!(g.m(), 21);
        assert_eq!(g.dx(), 1.0 / 22.0);
        assert_eq!(g.nodes()[0], g.dx());
        assert!(close(g.nodes()[20], 1.0 - g.dx(), 1e-15));
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(make_grid(1), Err(Error::InvalidGrid(1))));
        assert!(matches!(make_grid(0), Err(Error::InvalidGrid(0))));
    }

    #[test]
    fn function_class_parsing() {
        assert_eq!("Poly[3]".parse::<FunctionClass>().unwrap(), FunctionClass::poly(3));
        assert_eq!("sine2".parse::<FunctionClass>().unwrap(), FunctionClass::sine(2));
        assert_eq!("cos:8".parse::<FunctionClass>().unwrap(), FunctionClass::cosine(8));
        assert_eq!("FEM".parse::<FunctionClass>().unwrap(), FunctionClass::fem());
        assert!("poly".parse::<FunctionClass>().is_err());
        assert!("bessel[2]".parse::<FunctionClass>().is_err());
        for c in [FunctionClass::poly(4), FunctionClass::fem(), FunctionClass::sine(1)] {
            assert_eq!(c.to_string().parse::<FunctionClass>().unwrap(), c);
        }
    }

    #[test]
    fn root_form_expansion() {
        let spec = ForcingSpec::polynomial_from_roots(&[1.0, 2.0], 1.0);
        assert_eq!(spec.coefficients, vec![2.0, -3.0, 1.0]);
        assert_eq!(spec.order_p, 2);
    }

    #[test]
    fn sampled_specs_have_expected_shapes() {
        let grid = make_grid(4).unwrap();
        let mut r = rng::sample_stream(3, 0);
        let s = sample_forcing(Family::Sine, 3, &grid, 1.0, &mut r).unwrap();
        assert_eq!(s.coefficients.len(), 3);
        assert!(s.coefficients.iter().all(|c| (-1.0..=1.0).contains(c)));
        let p = sample_forcing(Family::Polynomial, 5, &grid, 1.0, &mut r).unwrap();
        assert_eq!(p.coefficients.len(), 6);
        assert_eq!(p.coefficients[5], 1.0);
        let fem = sample_forcing(Family::FemPiecewiseLinear, 0, &grid, 1.0, &mut r).unwrap();
        assert_eq!(fem.coefficients.len(), 5);
        assert_eq!(fem.coefficients[0], 0.0);
        assert_eq!(fem.coefficients[4], 0.0);
        assert!(sample_forcing(Family::Cosine, 0, &grid, 1.0, &mut r).is_err());
    }

    #[test]
    fn fem_interior_values_are_standard_normal() {
        let grid = make_grid(4).unwrap();
        let mut values = Vec::new();
        for n in 0..20_000 {
            let mut r = rng::sample_stream(11, n);
            let s = sample_forcing(Family::FemPiecewiseLinear, 0, &grid, 1.0, &mut r).unwrap();
            values.extend_from_slice(&s.coefficients[1..4]);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
    }

    #[test]
    fn constant_load_closed_form() {
        let grid = make_grid(4).unwrap();
        let spec = ForcingSpec {
            family: Family::Polynomial,
            order_p: 0,
            coefficients: vec![1.0],
            k: 1.0,
        };
        let s = solve_closed_form(&spec, &grid).unwrap();
        assert!(close(s.u[1], 0.125, 1e-15));
        for (i, &x) in grid.nodes().iter().enumerate() {
            assert!(close(s.u[i], x * (1.0 - x) / 2.0, 1e-15));
            assert_eq!(s.f[i], 1.0);
        }
    }

    #[test]
    fn sine_eigenfunction() {
        let grid = make_grid(4).unwrap();
        let spec = ForcingSpec {
            family: Family::Sine,
            order_p: 1,
            coefficients: vec![1.0],
            k: 1.0,
        };
        let s = solve_closed_form(&spec, &grid).unwrap();
        assert!(close(s.u[1], 1.0 / (PI * PI), 1e-15));
    }

    #[test]
    fn cosine_matches_green_quadrature() {
        let grid = make_grid(4).unwrap();
        let spec = ForcingSpec {
            family: Family::Cosine,
            order_p: 1,
            coefficients: vec![1.0],
            k: 1.0,
        };
        let s = solve_closed_form(&spec, &grid).unwrap();
        // Green's function integral evaluated independently.
        let x = 0.25;
        let g = |s: f64| if x < s { (1.0 - s) * x } else { (1.0 - x) * s };
        let oracle = simpson(|s| g(s) * (PI * s).cos(), 0.0, 1.0, 100_000);
        assert!(close(s.u[0], oracle, 1e-10), "{} vs {}", s.u[0], oracle);
    }

    #[test]
    fn fem_family_rejected_by_closed_form() {
        let grid = make_grid(4).unwrap();
        let spec = ForcingSpec {
            family: Family::FemPiecewiseLinear,
            order_p: 0,
            coefficients: vec![0.0; 5],
            k: 1.0,
        };
        assert!(matches!(solve_closed_form(&spec, &grid), Err(Error::WrongSolver(_))));
    }

    fn fem_spec(values: Vec<f64>, k: f64) -> ForcingSpec {
        ForcingSpec {
            family: Family::FemPiecewiseLinear,
            order_p: 0,
            coefficients: values,
            k,
        }
    }

    #[test]
    fn fem_constant_load_is_nodally_exact() {
        let grid = make_grid(4).unwrap();
        let s = solve_fem(&fem_spec(vec![1.0; 5], 1.0), &grid).unwrap();
        assert!(close(s.u[1], 0.125, 1e-15));
        assert!(close(s.u[0], 0.25 * 0.75 / 2.0, 1e-15));
    }

    #[test]
    fn fem_scales_with_inverse_k() {
        let grid = make_grid(9).unwrap();
        let values: Vec<f64> = (0..10).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let a = solve_fem(&fem_spec(values.clone(), 1.0), &grid).unwrap();
        let b = solve_fem(&fem_spec(values, 2.0), &grid).unwrap();
        for i in 0..grid.m() {
            assert!(close(b.u[i], 0.5 * a.u[i], 1e-15));
        }
    }

    #[test]
    fn fem_rejects_non_positive_k() {
        let grid = make_grid(4).unwrap();
        assert!(matches!(solve_fem(&fem_spec(vec![1.0; 5], 0.0), &grid), Err(Error::Solver(_))));
        assert!(matches!(solve_fem(&fem_spec(vec![1.0; 5], -1.0), &grid), Err(Error::Solver(_))));
    }

    #[test]
    fn smooth_samples_satisfy_second_order_consistency() {
        // Centered second difference of u approximates -f/k with O(dx^2) error.
        let max_err = |n_grid: usize| -> f64 {
            let grid = make_grid(n_grid).unwrap();
            let mut worst: f64 = 0.0;
            for n in 0..20 {
                for family in [Family::Polynomial, Family::Sine, Family::Cosine] {
                    let mut r = rng::sample_stream(5, n);
                    let spec = sample_forcing(family, 4, &grid, 2.0, &mut r).unwrap();
                    let s = solve(&spec, &grid).unwrap();
                    let u = |i: isize| -> f64 {
                        if i < 0 || i as usize >= grid.m() {
                            0.0
                        } else {
                            s.u[i as usize]
                        }
                    };
                    for i in 0..grid.m() as isize {
                        let d2 = (u(i - 1) - 2.0 * u(i) + u(i + 1)) / grid.dx().powi(2);
                        worst = worst.max((d2 + s.f[i as usize] / 2.0).abs());
                    }
                }
            }
            worst
        };
        let coarse = max_err(16);
        let fine = max_err(32);
        let ratio = coarse / fine;
        assert!((3.5..4.5).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn sine_dataset_is_scaled_first_mode() {
        let d = generate_dataset(FunctionClass::sine(1), 22, 10_000, 3, 1.0).unwrap();
        assert_eq!(d.len(), 10_000);
        assert_eq!(d.m(), 21);
        let nodes = d.grid.nodes();
        for n in [0, 17, 9_999] {
            let col = d.u.column(n);
            let scale = col[10] / (PI * nodes[10]).sin();
            for (i, &x) in nodes.iter().enumerate() {
                assert!(close(col[i], scale * (PI * x).sin(), 1e-13));
            }
        }
    }

    #[test]
    fn sine_series_reproduced_exactly() {
        let grid = make_grid(22).unwrap();
        let mut r = rng::sample_stream(1, 1);
        let spec = sample_forcing(Family::Sine, 5, &grid, 1.5, &mut r).unwrap();
        let s = solve(&spec, &grid).unwrap();
        for (i, &x) in grid.nodes().iter().enumerate() {
            let expect: f64 = spec
                .coefficients
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let w = (j + 1) as f64 * PI;
                    c * (w * x).sin() / (1.5 * w * w)
                })
                .sum();
            assert!(close(s.u[i], expect, 1e-15));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(FunctionClass::cosine(3), 12, 257, 9, 1.0).unwrap();
        let b = generate_dataset(FunctionClass::cosine(3), 12, 257, 9, 1.0).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(FunctionClass::cosine(3), 12, 257, 10, 1.0).unwrap();
        assert_ne!(a.f, c.f);
    }

    #[test]
    fn serial_and_parallel_generation_agree() {
        let parallel = generate_dataset(FunctionClass::poly(4), 10, 64, 2, 1.0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool
            .install(|| generate_dataset(FunctionClass::poly(4), 10, 64, 2, 1.0))
            .unwrap();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn high_order_polynomials_stay_finite() {
        let d = generate_dataset(FunctionClass::poly(8), 22, 100, 4, 1.0).unwrap();
        assert!(d.f.iter().chain(d.u.iter()).all(|v| v.is_finite()));
        assert!((d.mean_u_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalization_arithmetic() {
        let grid = make_grid(5).unwrap();
        let u = DVector::from_vec(vec![4.0, 0.0, 0.0, 0.0]);
        let samples = vec![
            Sample {
                f: DVector::from_element(4, 1.0),
                u: u.clone(),
            };
            3
        ];
        let d = Dataset::from_samples(grid, FunctionClass::sine(1), 0, 1.0, &samples).unwrap();
        let n = normalize(d).unwrap();
        assert_eq!(n.norm_scale, 0.25);
        assert!(close(n.mean_u_norm(), 1.0, 1e-15));
        assert_eq!(n.f[(0, 0)], 0.25);
        let again = normalize(n.clone()).unwrap();
        assert!(close(again.norm_scale / n.norm_scale, 1.0, 1e-12));
    }

    #[test]
    fn degenerate_normalization() {
        let grid = make_grid(3).unwrap();
        let zero = Sample {
            f: DVector::zeros(2),
            u: DVector::zeros(2),
        };
        let d = Dataset::from_samples(grid, FunctionClass::fem(), 0, 1.0, &[zero]).unwrap();
        assert!(matches!(normalize(d), Err(Error::DegenerateNormalization)));
    }
}
