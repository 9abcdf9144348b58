use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{InitScheme, ModelKind, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Optimizer {
    /// Adam with decoupled weight decay, applied to every tensor.
    #[serde(rename = "adamw")]
    AdamW {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
    /// Plain gradient descent: no momentum, no decay.
    Gd,
}

impl Optimizer {
    pub fn adamw(weight_decay: f64) -> Self {
        Optimizer::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Learning rate as a function of the optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// Linear interpolation from `start` at the first step to `end` at the last.
    Linear { start: f64, end: f64 },
    /// `start * factor^(step / every)`.
    Step { start: f64, factor: f64, every: usize },
    /// `1 / L` with `L` the gradient Lipschitz constant of the full-batch
    /// linear least-squares loss; only meaningful for the linear model.
    InverseLipschitz,
}

impl LrSchedule {
    /// Rate at 0-based `step` out of `total` steps. `InverseLipschitz` has no
    /// data-free value and returns NaN; the trainer resolves it.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::Linear { start, end } => {
                if total <= 1 {
                    start
                } else {
                    let t = step.min(total - 1) as f64 / (total - 1) as f64;
                    start + (end - start) * t
                }
            }
            LrSchedule::Step { start, factor, every } => start * factor.powi((step / every) as i32),
            LrSchedule::InverseLipschitz => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Length {
    Epochs(usize),
    Steps(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub schedule: LrSchedule,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub length: Length,
    pub seed: u64,
    pub init: InitScheme,
    pub hidden: usize,
}

/// Plain-GD step budget of theorem mode.
pub const THEOREM_STEPS: usize = 1 << 30;

impl TrainConfig {
    /// Default training setup of each model kind.
    pub fn defaults_for(kind: ModelKind) -> Self {
        let adamw = Optimizer::adamw(0.01);
        let base = Self {
            optimizer: adamw,
            schedule: LrSchedule::Linear { start: 1e-1, end: 1e-6 },
            batch_size: None,
            length: Length::Epochs(2000),
            seed: 0,
            init: InitScheme::default_for(kind),
            hidden: kind.default_hidden(),
        };
        match kind {
            ModelKind::FdFit(_) | ModelKind::Linear | ModelKind::DeepLinear => base,
            ModelKind::Mlp => Self {
                schedule: LrSchedule::Linear { start: 1e-2, end: 1e-6 },
                batch_size: Some(256),
                length: Length::Epochs(5000),
                ..base
            },
            ModelKind::DeepOnet => Self {
                schedule: LrSchedule::Step {
                    start: 1e-3,
                    factor: 0.1,
                    every: 5000,
                },
                batch_size: Some(256),
                length: Length::Steps(20_000),
                ..base
            },
        }
    }

    /// Plain full-batch gradient descent from `W0 = 0` at step size `1/L`,
    /// the setting in which the linear model's fixed point is known exactly.
    pub fn theorem() -> Self {
        Self {
            optimizer: Optimizer::Gd,
            schedule: LrSchedule::InverseLipschitz,
            batch_size: None,
            length: Length::Steps(THEOREM_STEPS),
            seed: 0,
            init: InitScheme::Zeros,
            hidden: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self.schedule {
            LrSchedule::Constant { lr } if !(lr > 0.0) => return bad(format!("lr must be positive, got {lr}")),
            LrSchedule::Linear { start, end } if !(start >= end && end > 0.0) => {
                return bad(format!("linear schedule needs start >= end > 0, got {start} -> {end}"))
            }
            LrSchedule::Step { start, factor, every }
                if !(start > 0.0) || !(factor > 0.0) || every == 0 =>
            {
                return bad("step schedule needs positive start, factor and period".into())
            }
            _ => {}
        }
        match self.length {
            Length::Epochs(0) | Length::Steps(0) => return bad("training length must be at least 1".into()),
            _ => {}
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be at least 1".into());
        }
        if let Optimizer::AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.optimizer
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) || weight_decay < 0.0 {
                return bad("AdamW needs betas in [0, 1), eps > 0 and weight_decay >= 0".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Per-tensor moment buffers for AdamW; empty for plain GD.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    optimizer: Optimizer,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer, params: &ModelParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
        let buffers = || shapes.iter().map(|&n| vec![0.0; n]).collect();
        let (m, v) = match optimizer {
            Optimizer::AdamW { .. } => (buffers(), buffers()),
            Optimizer::Gd => (Vec::new(), Vec::new()),
        };
        Self { optimizer, m, v, t: 0 }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        let grads: Vec<&[f64]> = grads.tensors().into_iter().map(|t| t.data).collect();
        let slices = params.slices_mut();
        match self.optimizer {
            Optimizer::Gd => {
                for (p, g) in slices.into_iter().zip(grads) {
                    p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
                }
            }
            Optimizer::AdamW {
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (k, (p, g)) in slices.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let update = (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                        p[i] -= lr * (update + weight_decay * p[i]);
                    }
                }
            }
        }
    }
}
