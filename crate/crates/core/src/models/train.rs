use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{Length, LrSchedule, Optimizer, OptimizerState, TrainConfig};
use super::{fd_residual_mse, fit_fd_parameter, forward_batch, init_model_sized, loss_and_grads, ModelKind, ModelParams};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::rng::{purpose_stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Train MSE per epoch; for full-batch runs the value before each step.
    pub epoch_mse: Vec<f64>,
    /// Index into `epoch_mse` of the returned parameters.
    pub best_epoch: usize,
    /// Train MSE of the returned parameters, evaluated directly.
    pub final_mse: f64,
    pub wall_clock_secs: f64,
    pub seed: u64,
    pub steps: usize,
}

/// Mean-squared error of `params` on a whole dataset.
///
/// Uses the prediction error `model(f) - u` for every kind except `FdFit`,
/// which reports its stencil residual `w FD_q(u) + f`.
pub fn dataset_mse(params: &ModelParams, dataset: &Dataset) -> Result<f64> {
    if let ModelParams::FdFit { q, w } = params {
        return fd_residual_mse(*w, dataset, *q);
    }
    let y = forward_batch(params, &dataset.f, &dataset.grid)?;
    Ok((y - &dataset.u).norm_squared() / (dataset.m() * dataset.len()) as f64)
}

/// Initializes per `config` and trains.
pub fn train(kind: ModelKind, dataset: &Dataset, config: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    let hidden = if config.hidden == 0 {
        kind.default_hidden()
    } else {
        config.hidden
    };
    let params = init_model_sized(kind, dataset.m(), hidden, config.seed, config.init);
    train_from(params, dataset, config)
}

/// Trains from the given starting point; returns the best parameters seen.
pub fn train_from(
    params: ModelParams,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    if let Some(m) = params.input_dim() {
        if m != dataset.m() {
            return Err(Error::Incompatible(format!(
                "model expects {m} interior nodes, dataset has {}",
                dataset.m()
            )));
        }
    }
    if dataset.is_empty() {
        return Err(Error::InvalidSpec("cannot train on an empty dataset".into()));
    }
    let start = Instant::now();
    let full_batch = config.batch_size.is_none_or(|b| b >= dataset.len());
    let (params, mut history) = match params {
        ModelParams::FdFit { q, .. } => {
            let w = fit_fd_parameter(dataset, q)?;
            let mse = fd_residual_mse(w, dataset, q)?;
            let history = TrainHistory {
                epoch_mse: vec![mse],
                best_epoch: 0,
                final_mse: mse,
                wall_clock_secs: 0.0,
                seed: config.seed,
                steps: 0,
            };
            (ModelParams::FdFit { q, w }, history)
        }
        ModelParams::Linear { w } if full_batch => {
            let stats = LinearStats::new(dataset);
            match (config.optimizer, config.schedule) {
                (Optimizer::Gd, LrSchedule::Constant { .. } | LrSchedule::InverseLipschitz) => {
                    gd_closed_loop(w, &stats, dataset, config)?
                }
                _ => linear_full_batch(w, &stats, config)?,
            }
        }
        params => {
            if config.schedule == LrSchedule::InverseLipschitz {
                return Err(Error::Config(format!(
                    "the 1/L step size is defined for full-batch linear training, not {}",
                    params.kind()
                )));
            }
            generic(params, dataset, config, full_batch)?
        }
    };
    history.final_mse = dataset_mse(&params, dataset)?;
    history.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((params, history))
}

/// Sufficient statistics of full-batch linear least squares.
struct LinearStats {
    /// `F F^T / N`.
    s: DMatrix<f64>,
    /// `U F^T / N`.
    c: DMatrix<f64>,
    /// `tr(U U^T) / N`.
    uu: f64,
    m: f64,
}

impl LinearStats {
    fn new(d: &Dataset) -> Self {
        let n = d.len() as f64;
        Self {
            s: &d.f * d.f.transpose() / n,
            c: &d.u * d.f.transpose() / n,
            uu: d.u.norm_squared() / n,
            m: d.m() as f64,
        }
    }

    /// MSE and its gradient `(2/M)(W S - C)`.
    fn loss_and_grad(&self, w: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let ws = w * &self.s;
        let loss = (ws.dot(w) - 2.0 * self.c.dot(w) + self.uu) / self.m;
        (loss, (ws - &self.c) * (2.0 / self.m))
    }

}

fn total_steps(config: &TrainConfig, batches_per_epoch: usize) -> usize {
    match config.length {
        Length::Epochs(e) => e * batches_per_epoch,
        Length::Steps(s) => s,
    }
}

/// Relative size below which an eigenvalue of `S` is treated as exactly zero.
/// Directions orthogonal to every forcing carry eigenvalue 0 in exact
/// arithmetic; rounding leaves them near `1e-16 lambda_max`.
const NULL_EIG_TOL: f64 = 1e-13;

/// Plain full-batch GD at a constant step, advanced in closed form.
///
/// One step is the affine map `W -> W (I - b S) + b C` with `b = 2 lr / M`.
/// In the eigenbasis `S = Q diag(lambda) Q^T` the `T`-th iterate is
/// `W_T Q = W_0 Q D + C Q E` with `D = (1 - b lambda)^T` and
/// `E = (1 - D) / lambda`, so any step count costs one eigendecomposition.
/// Null directions of `S` keep `W_0` untouched.
fn gd_closed_loop(
    w0: DMatrix<f64>,
    stats: &LinearStats,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    let steps = total_steps(config, 1);
    let eig = SymmetricEigen::new(stats.s.clone());
    let lmax = eig.eigenvalues.max().max(0.0);
    let lr = match config.schedule {
        LrSchedule::Constant { lr } => lr,
        _ => stats.m / (2.0 * lmax),
    };
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("step size {lr} is not usable")));
    }
    let b = 2.0 * lr / stats.m;
    let t = steps as f64;
    let m = w0.nrows();
    let mut d = DVector::zeros(m);
    let mut e = DVector::zeros(m);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= NULL_EIG_TOL * lmax {
            d[i] = 1.0;
            continue;
        }
        let factor = 1.0 - b * lambda;
        let sign = if factor < 0.0 && steps % 2 == 1 { -1.0 } else { 1.0 };
        let power = sign * factor.abs().powf(t);
        d[i] = power;
        e[i] = (1.0 - power) / lambda;
    }
    let q = &eig.eigenvectors;
    let wq = (&w0 * q) * DMatrix::from_diagonal(&d) + (&stats.c * q) * DMatrix::from_diagonal(&e);
    let w = wq * q.transpose();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { epoch: steps, lr });
    }
    let initial = dataset_mse(&ModelParams::Linear { w: w0 }, dataset)?;
    let params = ModelParams::Linear { w };
    let last = dataset_mse(&params, dataset)?;
    Ok((
        params,
        TrainHistory {
            epoch_mse: vec![initial, last],
            best_epoch: 1,
            final_mse: last,
            wall_clock_secs: 0.0,
            seed: config.seed,
            steps,
        },
    ))
}

/// Full-batch linear training driven by the sufficient statistics.
fn linear_full_batch(
    w: DMatrix<f64>,
    stats: &LinearStats,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    let total = total_steps(config, 1);
    let mut params = ModelParams::Linear { w };
    let mut state = OptimizerState::new(config.optimizer, &params);
    let mut epoch_mse = Vec::with_capacity(total + 1);
    let mut best: Option<(f64, DMatrix<f64>, usize)> = None;
    for step in 0..=total {
        let ModelParams::Linear { w } = &params else { unreachable!() };
        let lr = config.schedule.lr_at(step.min(total - 1), total);
        let (loss, grad) = stats.loss_and_grad(w);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch: step, lr });
        }
        epoch_mse.push(loss);
        if best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, w.clone(), step));
        }
        if step < total {
            state.step(&mut params, &ModelParams::Linear { w: grad }, lr);
        }
    }
    let (loss, w, best_epoch) = best.expect("at least one step ran");
    Ok((
        ModelParams::Linear { w },
        TrainHistory {
            epoch_mse,
            best_epoch,
            final_mse: loss,
            wall_clock_secs: 0.0,
            seed: config.seed,
            steps: total,
        },
    ))
}

fn generic(
    mut params: ModelParams,
    dataset: &Dataset,
    config: &TrainConfig,
    full_batch: bool,
) -> Result<(ModelParams, TrainHistory)> {
    let n = dataset.len();
    let batch = if full_batch { n } else { config.batch_size.unwrap_or(n) };
    let per_epoch = n.div_ceil(batch);
    let total = total_steps(config, per_epoch);
    let epochs = total.div_ceil(per_epoch);
    let grid = &dataset.grid;
    let mut rng = purpose_stream(config.seed, Purpose::Shuffle);
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = OptimizerState::new(config.optimizer, &params);
    let mut epoch_mse = Vec::with_capacity(epochs + 1);
    let mut best: Option<(f64, ModelParams, usize)> = None;
    let mut step = 0;
    for epoch in 0..epochs {
        let mut lr = config.schedule.lr_at(step, total);
        if full_batch {
            let (loss, grads) = loss_and_grads(&params, &dataset.f, &dataset.u, grid)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, lr });
            }
            epoch_mse.push(loss);
            if best.as_ref().is_none_or(|b| loss < b.0) {
                best = Some((loss, params.clone(), epoch));
            }
            state.step(&mut params, &grads, lr);
            step += 1;
            continue;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            if step == total {
                break;
            }
            lr = config.schedule.lr_at(step, total);
            let f = dataset.f.select_columns(chunk);
            let u = dataset.u.select_columns(chunk);
            let (loss, grads) = loss_and_grads(&params, &f, &u, grid)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, lr });
            }
            state.step(&mut params, &grads, lr);
            step += 1;
        }
        let mse = dataset_mse(&params, dataset)?;
        if !mse.is_finite() {
            return Err(Error::Divergence { epoch, lr });
        }
        epoch_mse.push(mse);
        if best.as_ref().is_none_or(|b| mse < b.0) {
            best = Some((mse, params.clone(), epoch));
        }
    }
    if full_batch {
        // Score the parameters left by the final step as well.
        let mse = dataset_mse(&params, dataset)?;
        let lr = config.schedule.lr_at(total.saturating_sub(1), total);
        if !mse.is_finite() {
            return Err(Error::Divergence { epoch: epochs, lr });
        }
        epoch_mse.push(mse);
        if best.as_ref().is_none_or(|b| mse < b.0) {
            best = Some((mse, params.clone(), epochs));
        }
    }
    let (mse, params, best_epoch) = best.expect("at least one epoch ran");
    Ok((
        params,
        TrainHistory {
            epoch_mse,
            best_epoch,
            final_mse: mse,
            wall_clock_secs: 0.0,
            seed: config.seed,
            steps: step,
        },
    ))
}
