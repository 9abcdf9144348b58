//! Model zoo: finite-difference fit, linear, deep linear, MLP and DeepONet,
//! with hand-written backpropagation.

mod checkpoint;
mod gradcheck;
mod optim;
mod stencil;
mod train;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Grid;
use crate::error::{Error, Result};
use crate::rng::{purpose_stream, Purpose};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_SCHEMA_VERSION};
pub use gradcheck::{check_gradients, GradCheck};
pub use optim::{Length, LrSchedule, Optimizer, OptimizerState, TrainConfig};
pub use stencil::*;
pub use train::{dataset_mse, train, train_from, TrainHistory};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Single-coefficient stencil model of order 2 or 4.
    FdFit(usize),
    Linear,
    DeepLinear,
    Mlp,
    DeepOnet,
}

impl ModelKind {
    pub fn default_hidden(self) -> usize {
        match self {
            ModelKind::DeepLinear => 100,
            ModelKind::Mlp => 1024,
            ModelKind::DeepOnet => 256,
            ModelKind::FdFit(_) | ModelKind::Linear => 0,
        }
    }

    pub fn all_default() -> [ModelKind; 5] {
        [
            ModelKind::FdFit(2),
            ModelKind::Linear,
            ModelKind::DeepLinear,
            ModelKind::Mlp,
            ModelKind::DeepOnet,
        ]
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::FdFit(q) => write!(f, "fd{q}"),
            ModelKind::Linear => f.write_str("linear"),
            ModelKind::DeepLinear => f.write_str("deep-linear"),
            ModelKind::Mlp => f.write_str("mlp"),
            ModelKind::DeepOnet => f.write_str("deeponet"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fd" | "fd2" => Ok(ModelKind::FdFit(2)),
            "fd4" => Ok(ModelKind::FdFit(4)),
            "linear" => Ok(ModelKind::Linear),
            "deep-linear" | "deeplinear" | "deep_linear" => Ok(ModelKind::DeepLinear),
            "mlp" => Ok(ModelKind::Mlp),
            "deeponet" | "deep-onet" => Ok(ModelKind::DeepOnet),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

impl Serialize for ModelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    Zeros,
    /// Weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    FanInUniform,
}

impl InitScheme {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Linear | ModelKind::FdFit(_) => InitScheme::Zeros,
            _ => InitScheme::FanInUniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

/// Two affine layers `y = out(W2 hid(W1 x + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense2 {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

struct DenseCache {
    z1: DMatrix<f64>,
    h: DMatrix<f64>,
    z2: DMatrix<f64>,
    y: DMatrix<f64>,
}

fn add_bias(mut z: DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    for mut col in z.column_iter_mut() {
        col += b;
    }
    z
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |i, _| m.row(i).sum())
}

impl Dense2 {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: DMatrix::zeros(hidden, input),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(output, hidden),
            b2: DVector::zeros(output),
        }
    }

    fn fan_in<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut d = Self::zeros(input, hidden, output);
        let a = 1.0 / (input as f64).sqrt();
        d.w1.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        let a = 1.0 / (hidden as f64).sqrt();
        d.w2.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        d
    }

    fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    fn forward(&self, x: &DMatrix<f64>, hid: Activation, out: Activation) -> DenseCache {
        let z1 = add_bias(&self.w1 * x, &self.b1);
        let h = z1.map(|z| hid.apply(z));
        let z2 = add_bias(&self.w2 * &h, &self.b2);
        let y = z2.map(|z| out.apply(z));
        DenseCache { z1, h, z2, y }
    }

    fn backward(
        &self,
        x: &DMatrix<f64>,
        cache: &DenseCache,
        dy: &DMatrix<f64>,
        hid: Activation,
        out: Activation,
    ) -> Dense2 {
        let dz2 = dy.zip_map(&cache.z2, |g, z| g * out.derivative(z));
        let dh = self.w2.transpose() * &dz2;
        let dz1 = dh.zip_map(&cache.z1, |g, z| g * hid.derivative(z));
        Dense2 {
            w1: &dz1 * x.transpose(),
            b1: row_sums(&dz1),
            w2: &dz2 * cache.h.transpose(),
            b2: row_sums(&dz2),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w1: DMatrix::zeros(self.w1.nrows(), self.w1.ncols()),
            b1: DVector::zeros(self.b1.len()),
            w2: DMatrix::zeros(self.w2.nrows(), self.w2.ncols()),
            b2: DVector::zeros(self.b2.len()),
        }
    }

    fn named<'a>(&'a self, prefix: &str, out: &mut Vec<NamedTensor<'a>>) {
        out.push(NamedTensor::matrix(format!("{prefix}w1"), &self.w1));
        out.push(NamedTensor::vector(format!("{prefix}b1"), &self.b1));
        out.push(NamedTensor::matrix(format!("{prefix}w2"), &self.w2));
        out.push(NamedTensor::vector(format!("{prefix}b2"), &self.b2));
    }

    fn slices_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.w1.as_mut_slice());
        out.push(self.b1.as_mut_slice());
        out.push(self.w2.as_mut_slice());
        out.push(self.b2.as_mut_slice());
    }
}

/// DeepONet with the f-tower as branch and the x-tower as trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepOnetParams {
    /// `M -> H -> H`, ReLU hidden layer, linear output.
    pub branch: Dense2,
    /// `1 -> H -> H`, ReLU on both layers.
    pub trunk: Dense2,
}

const BRANCH_ACT: (Activation, Activation) = (Activation::Relu, Activation::Identity);
const TRUNK_ACT: (Activation, Activation) = (Activation::Relu, Activation::Relu);

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    FdFit { q: usize, w: f64 },
    Linear { w: DMatrix<f64> },
    DeepLinear(Dense2),
    Mlp(Dense2),
    DeepOnet(DeepOnetParams),
}

/// Read-only view of one parameter tensor; column-major data.
pub struct NamedTensor<'a> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl<'a> NamedTensor<'a> {
    fn matrix(name: String, m: &'a DMatrix<f64>) -> Self {
        Self {
            name,
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice(),
        }
    }

    fn vector(name: String, v: &'a DVector<f64>) -> Self {
        Self {
            name,
            rows: v.len(),
            cols: 1,
            data: v.as_slice(),
        }
    }
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::FdFit { q, .. } => ModelKind::FdFit(*q),
            ModelParams::Linear { .. } => ModelKind::Linear,
            ModelParams::DeepLinear(_) => ModelKind::DeepLinear,
            ModelParams::Mlp(_) => ModelKind::Mlp,
            ModelParams::DeepOnet(_) => ModelKind::DeepOnet,
        }
    }

    /// Number of interior nodes the model expects; `None` for grid-agnostic stencils.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            ModelParams::FdFit { .. } => None,
            ModelParams::Linear { w } => Some(w.ncols()),
            ModelParams::DeepLinear(d) | ModelParams::Mlp(d) => Some(d.input_dim()),
            ModelParams::DeepOnet(d) => Some(d.branch.input_dim()),
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            ModelParams::FdFit { .. } | ModelParams::Linear { .. } => 0,
            ModelParams::DeepLinear(d) | ModelParams::Mlp(d) => d.w1.nrows(),
            ModelParams::DeepOnet(d) => d.branch.w1.nrows(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            ModelParams::FdFit { q, .. } => ModelParams::FdFit { q: *q, w: 0.0 },
            ModelParams::Linear { w } => ModelParams::Linear {
                w: DMatrix::zeros(w.nrows(), w.ncols()),
            },
            ModelParams::DeepLinear(d) => ModelParams::DeepLinear(d.zeros_like()),
            ModelParams::Mlp(d) => ModelParams::Mlp(d.zeros_like()),
            ModelParams::DeepOnet(d) => ModelParams::DeepOnet(DeepOnetParams {
                branch: d.branch.zeros_like(),
                trunk: d.trunk.zeros_like(),
            }),
        }
    }

    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = Vec::new();
        match self {
            ModelParams::FdFit { w, .. } => out.push(NamedTensor {
                name: "w".into(),
                rows: 1,
                cols: 1,
                data: std::slice::from_ref(w),
            }),
            ModelParams::Linear { w } => out.push(NamedTensor::matrix("w".into(), w)),
            ModelParams::DeepLinear(d) | ModelParams::Mlp(d) => d.named("", &mut out),
            ModelParams::DeepOnet(d) => {
                d.branch.named("branch.", &mut out);
                d.trunk.named("trunk.", &mut out);
            }
        }
        out
    }

    /// Every parameter tensor as a flat mutable slice, in `tensors()` order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        match self {
            ModelParams::FdFit { w, .. } => out.push(std::slice::from_mut(w)),
            ModelParams::Linear { w } => out.push(w.as_mut_slice()),
            ModelParams::DeepLinear(d) | ModelParams::Mlp(d) => d.slices_mut(&mut out),
            ModelParams::DeepOnet(d) => {
                d.branch.slices_mut(&mut out);
                d.trunk.slices_mut(&mut out);
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        match self.input_dim() {
            Some(m) if m != grid.m() => Err(Error::Incompatible(format!(
                "model expects {m} interior nodes, grid has {}",
                grid.m()
            ))),
            _ => Ok(()),
        }
    }
}

/// Initial parameters with the kind's default hidden width.
pub fn init_model(kind: ModelKind, m: usize, seed: u64, scheme: InitScheme) -> ModelParams {
    init_model_sized(kind, m, kind.default_hidden(), seed, scheme)
}

pub fn init_model_sized(
    kind: ModelKind,
    m: usize,
    hidden: usize,
    seed: u64,
    scheme: InitScheme,
) -> ModelParams {
    let mut rng = purpose_stream(seed, Purpose::Init);
    let dense = |input: usize, output: usize, rng: &mut _| match scheme {
        InitScheme::Zeros => Dense2::zeros(input, hidden, output),
        InitScheme::FanInUniform => Dense2::fan_in(input, hidden, output, rng),
    };
    match kind {
        ModelKind::FdFit(q) => ModelParams::FdFit { q, w: 0.0 },
        ModelKind::Linear => {
            let a = 1.0 / (m as f64).sqrt();
            let w = match scheme {
                InitScheme::Zeros => DMatrix::zeros(m, m),
                InitScheme::FanInUniform => DMatrix::from_fn(m, m, |_, _| rng.random_range(-a..a)),
            };
            ModelParams::Linear { w }
        }
        ModelKind::DeepLinear => ModelParams::DeepLinear(dense(m, m, &mut rng)),
        ModelKind::Mlp => ModelParams::Mlp(dense(m, m, &mut rng)),
        ModelKind::DeepOnet => {
            let branch = dense(m, hidden, &mut rng);
            let trunk = dense(1, hidden, &mut rng);
            ModelParams::DeepOnet(DeepOnetParams { branch, trunk })
        }
    }
}

fn node_row(grid: &Grid) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, grid.m(), grid.nodes())
}

/// Predictions for every column of `f` (`M x B`).
pub fn forward_batch(params: &ModelParams, f: &DMatrix<f64>, grid: &Grid) -> Result<DMatrix<f64>> {
    params.check_grid(grid)?;
    if f.nrows() != grid.m() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} rows, grid has {} interior nodes",
            f.nrows(),
            grid.m()
        )));
    }
    Ok(match params {
        ModelParams::FdFit { q, w } => {
            let l = fd_operator(grid.m(), grid.dx(), *q)? * (-*w);
            let lu = l.lu();
            let mut out = DMatrix::zeros(f.nrows(), f.ncols());
            for (n, col) in f.column_iter().enumerate() {
                let u = lu.solve(&col.into_owned()).ok_or_else(|| {
                    Error::Solver(format!("finite-difference operator with w = {w} is singular"))
                })?;
                out.set_column(n, &u);
            }
            out
        }
        ModelParams::Linear { w } => w * f,
        ModelParams::DeepLinear(d) => d.forward(f, Activation::Identity, Activation::Identity).y,
        ModelParams::Mlp(d) => d.forward(f, Activation::LeakyRelu, Activation::Identity).y,
        ModelParams::DeepOnet(d) => {
            let t = d.trunk.forward(&node_row(grid), TRUNK_ACT.0, TRUNK_ACT.1).y;
            let b = d.branch.forward(f, BRANCH_ACT.0, BRANCH_ACT.1).y;
            t.transpose() * b
        }
    })
}

pub fn forward(params: &ModelParams, f: &DVector<f64>, grid: &Grid) -> Result<DVector<f64>> {
    let u = forward_batch(params, &DMatrix::from_column_slice(f.len(), 1, f.as_slice()), grid)?;
    Ok(u.column(0).into_owned())
}

/// Mean-squared error over the batch and its exact gradient.
///
/// For every kind except `FdFit` the loss is `mean((model(f) - u)^2)` over
/// samples and nodes. `FdFit` uses the residual `mean((w FD_q(u) + f)^2)`
/// over supported nodes, the objective its closed-form fit minimizes.
pub fn loss_and_grads(
    params: &ModelParams,
    f: &DMatrix<f64>,
    u: &DMatrix<f64>,
    grid: &Grid,
) -> Result<(f64, ModelParams)> {
    params.check_grid(grid)?;
    if f.shape() != u.shape() || f.nrows() != grid.m() || f.ncols() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "batch f {:?} and u {:?} on a grid with {} interior nodes",
            f.shape(),
            u.shape(),
            grid.m()
        )));
    }
    if let ModelParams::FdFit { q, w } = params {
        let mut sum = 0.0;
        let mut grad = 0.0;
        let mut count = 0usize;
        for n in 0..u.ncols() {
            let (uc, fc) = (u.column(n), f.column(n));
            let (d, range) = fd_stencil_apply(uc.as_slice(), grid.dx(), *q)?;
            for (di, fi) in d.iter().zip(&fc.as_slice()[range]) {
                let r = w * di + fi;
                sum += r * r;
                grad += 2.0 * r * di;
                count += 1;
            }
        }
        let c = count as f64;
        return Ok((sum / c, ModelParams::FdFit { q: *q, w: grad / c }));
    }

    let scale = 2.0 / (u.nrows() * u.ncols()) as f64;
    let mse = |y: &DMatrix<f64>| (y - u).norm_squared() / (u.nrows() * u.ncols()) as f64;
    Ok(match params {
        ModelParams::FdFit { .. } => unreachable!("handled above"),
        ModelParams::Linear { w } => {
            let y = w * f;
            let dy = (&y - u) * scale;
            (mse(&y), ModelParams::Linear { w: dy * f.transpose() })
        }
        ModelParams::DeepLinear(d) | ModelParams::Mlp(d) => {
            let hid = if matches!(params, ModelParams::Mlp(_)) {
                Activation::LeakyRelu
            } else {
                Activation::Identity
            };
            let cache = d.forward(f, hid, Activation::Identity);
            let dy = (&cache.y - u) * scale;
            let g = d.backward(f, &cache, &dy, hid, Activation::Identity);
            let loss = mse(&cache.y);
            if matches!(params, ModelParams::Mlp(_)) {
                (loss, ModelParams::Mlp(g))
            } else {
                (loss, ModelParams::DeepLinear(g))
            }
        }
        ModelParams::DeepOnet(d) => {
            let x = node_row(grid);
            let tc = d.trunk.forward(&x, TRUNK_ACT.0, TRUNK_ACT.1);
            let bc = d.branch.forward(f, BRANCH_ACT.0, BRANCH_ACT.1);
            let y = tc.y.transpose() * &bc.y;
            let dy = (&y - u) * scale;
            let d_branch = &tc.y * &dy;
            let d_trunk = &bc.y * dy.transpose();
            let branch = d.branch.backward(f, &bc, &d_branch, BRANCH_ACT.0, BRANCH_ACT.1);
            let trunk = d.trunk.backward(&x, &tc, &d_trunk, TRUNK_ACT.0, TRUNK_ACT.1);
            (mse(&y), ModelParams::DeepOnet(DeepOnetParams { branch, trunk }))
        }
    })
}

#[cfg(test)]
mod tests;
