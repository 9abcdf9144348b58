use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mse;
use crate::datasets::{generate_dataset, Dataset, Family, FunctionClass};
use crate::error::{Error, Result};
use crate::models::{train, ModelKind, ModelParams, TrainConfig};

/// Training and test families for a cross-evaluation.
///
/// The full grid is FEM, Poly[1..8], Cos[1..8], Sine[1..8] in that order.
/// Subsets keep the same relative order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyGrid {
    pub classes: Vec<FunctionClass>,
    pub n_grid: usize,
    pub seeds: Vec<u64>,
    pub n_examples: usize,
    /// Base seed of the datasets; each family derives its own from it.
    pub data_seed: u64,
    pub k: f64,
}

fn class_code(class: FunctionClass) -> u64 {
    let block = match class.family {
        Family::FemPiecewiseLinear => 0,
        Family::Polynomial => 1,
        Family::Cosine => 2,
        Family::Sine => 3,
    };
    block * 100 + class.p as u64
}

impl FamilyGrid {
    pub fn standard_classes() -> Vec<FunctionClass> {
        let mut v = vec![FunctionClass::fem()];
        v.extend((1..=8).map(FunctionClass::poly));
        v.extend((1..=8).map(FunctionClass::cosine));
        v.extend((1..=8).map(FunctionClass::sine));
        v
    }

    /// All 25 families with five training seeds.
    pub fn new(n_grid: usize, n_examples: usize) -> Self {
        Self {
            classes: Self::standard_classes(),
            n_grid,
            seeds: (0..5).collect(),
            n_examples,
            data_seed: 0,
            k: 1.0,
        }
    }

    /// Restricts to `classes`, which must be members of the standard list.
    pub fn with_classes(mut self, classes: &[FunctionClass]) -> Result<Self> {
        let standard = Self::standard_classes();
        let mut picked = Vec::new();
        for c in classes {
            let c = FunctionClass::new(c.family, c.p);
            if !standard.contains(&c) {
                return Err(Error::Config(format!("{c} is not one of the 25 benchmark families")));
            }
            if picked.contains(&c) {
                return Err(Error::Config(format!("{c} listed twice")));
            }
            picked.push(c);
        }
        picked.sort_by_key(|c| class_code(*c));
        self.classes = picked;
        Ok(self)
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("family grid is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one training seed is required".into()));
        }
        if self.n_examples == 0 {
            return Err(Error::Config("n_examples must be at least 1".into()));
        }
        if self.n_grid < 2 {
            return Err(Error::InvalidGrid(self.n_grid));
        }
        Ok(())
    }

    /// Data seed of one family; independent of which other families are
    /// present, so subsets reproduce the full grid's datasets.
    pub fn dataset_seed(&self, class: FunctionClass) -> u64 {
        self.data_seed.wrapping_mul(1000).wrapping_add(class_code(class))
    }

    pub fn datasets(&self) -> Result<Vec<Dataset>> {
        self.validate()?;
        self.classes
            .par_iter()
            .map(|&c| generate_dataset(c, self.n_grid, self.n_examples, self.dataset_seed(c), self.k))
            .collect()
    }
}

/// Whether `sub`'s span lies inside `sup`'s, per the fixed declared relation:
/// nested orders within a smooth family, and Poly[1] inside FEM.
pub fn contained(sub: FunctionClass, sup: FunctionClass) -> bool {
    if sub == sup {
        return true;
    }
    match (sub.family, sup.family) {
        (a, b) if a == b && a.is_smooth() => sub.p <= sup.p,
        (Family::Polynomial, Family::FemPiecewiseLinear) => sub.p == 1,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub train: FunctionClass,
    /// Seed of the selected run.
    pub seed: u64,
    pub train_mse: f64,
    /// Seeds whose runs failed numerically, with the reason.
    pub diverged: Vec<(u64, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMeta {
    pub train: FunctionClass,
    pub test: FunctionClass,
    pub seed: u64,
    pub train_mse: f64,
    pub mse: f64,
}

/// Test MSE of the best run per training family (rows) on every test family
/// (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub kind: ModelKind,
    pub classes: Vec<FunctionClass>,
    pub mse: DMatrix<f64>,
    pub rows: Vec<RowMeta>,
    /// Selected parameters per training family.
    pub params: Vec<ModelParams>,
}

impl EvalGrid {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn cell(&self, train: usize, test: usize) -> CellMeta {
        let row = &self.rows[train];
        CellMeta {
            train: row.train,
            test: self.classes[test],
            seed: row.seed,
            train_mse: row.train_mse,
            mse: self.mse[(train, test)],
        }
    }

    pub fn index_of(&self, class: FunctionClass) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }
}

enum Run {
    Done(ModelParams, f64),
    Failed(String),
}

/// Trains `kind` on every family with every seed, keeps the run with the
/// lowest train MSE per family and evaluates it on all families.
///
/// Runs are spread over the rayon pool and gathered by index, so the result
/// does not depend on scheduling.
pub fn cross_eval(kind: ModelKind, grid: &FamilyGrid, config: &TrainConfig) -> Result<EvalGrid> {
    config.validate()?;
    let datasets = grid.datasets()?;
    let jobs: Vec<(usize, u64)> = (0..datasets.len())
        .flat_map(|i| grid.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let runs: Vec<Run> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let d = &datasets[i];
            let outcome = train(kind, d, &config.clone().with_seed(seed)).and_then(|(p, _)| {
                let m = mse(&p, d)?;
                Ok((p, m))
            });
            match outcome {
                Ok((p, m)) if m.is_finite() => Ok(Run::Done(p, m)),
                Ok((_, m)) => Ok(Run::Failed(format!("train MSE is {m}"))),
                Err(e) if e.is_numerical() => Ok(Run::Failed(e.to_string())),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(datasets.len());
    let mut params = Vec::with_capacity(datasets.len());
    for (i, chunk) in runs.chunks(grid.seeds.len()).enumerate() {
        let mut best: Option<(u64, f64, &ModelParams)> = None;
        let mut diverged = Vec::new();
        for (run, &seed) in chunk.iter().zip(&grid.seeds) {
            match run {
                Run::Done(p, m) => {
                    if best.is_none_or(|b| *m < b.1) {
                        best = Some((seed, *m, p));
                    }
                }
                Run::Failed(why) => diverged.push((seed, why.clone())),
            }
        }
        let (seed, train_mse, p) = best.ok_or_else(|| Error::AllDiverged(grid.classes[i].to_string()))?;
        rows.push(RowMeta {
            train: grid.classes[i],
            seed,
            train_mse,
            diverged,
        });
        params.push(p.clone());
    }

    let n = datasets.len();
    let cells: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|ix| {
            let (i, j) = (ix / n, ix % n);
            if i == j {
                Ok(rows[i].train_mse)
            } else {
                mse(&params[i], &datasets[j])
            }
        })
        .collect::<Result<_>>()?;
    Ok(EvalGrid {
        kind,
        classes: grid.classes.clone(),
        mse: DMatrix::from_row_slice(n, n, &cells),
        rows,
        params,
    })
}
