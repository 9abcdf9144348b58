//! Checkpoint directory: `manifest` plus one `<tensor>.bin` per parameter
//! tensor, stored column-major as raw little-endian f64.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{init_model_sized, InitScheme, ModelKind, ModelParams};
use crate::error::{Error, Result};
use crate::rawio;
use crate::rng::RNG_NAME;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub n_grid: usize,
    pub k: f64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    schema_version: u32,
    kind: ModelKind,
    m: usize,
    hidden: usize,
    n_grid: usize,
    k: f64,
    seed: u64,
    config_hash: String,
    rng: String,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    rawio::create_dir(dir)?;
    let tensors = ckpt.params.tensors();
    let manifest = CheckpointManifest {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        kind: ckpt.params.kind(),
        m: ckpt.params.input_dim().unwrap_or(ckpt.n_grid.saturating_sub(1)),
        hidden: ckpt.params.hidden(),
        n_grid: ckpt.n_grid,
        k: ckpt.k,
        seed: ckpt.seed,
        config_hash: ckpt.config_hash.clone(),
        rng: RNG_NAME.to_string(),
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect(),
    };
    rawio::write_toml(&dir.join("manifest"), &manifest)?;
    for t in &tensors {
        rawio::write_f64s(&dir.join(format!("{}.bin", t.name)), t.data)?;
    }
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join("manifest");
    rawio::check_version(&path, CHECKPOINT_SCHEMA_VERSION)?;
    let man: CheckpointManifest = rawio::read_toml(&path)?;
    if man.n_grid < 2 || man.m != man.n_grid - 1 {
        return Err(Error::format(&path, format!("m = {} disagrees with n_grid = {}", man.m, man.n_grid)));
    }
    let mut params = init_model_sized(man.kind, man.m, man.hidden, 0, InitScheme::Zeros);
    let expected: Vec<(String, usize, usize)> = params
        .tensors()
        .iter()
        .map(|t| (t.name.clone(), t.rows, t.cols))
        .collect();
    let listed: Vec<(String, usize, usize)> =
        man.tensors.iter().map(|t| (t.name.clone(), t.rows, t.cols)).collect();
    if expected != listed {
        return Err(Error::format(
            &path,
            format!("tensor list does not match a {} model with m = {}", man.kind, man.m),
        ));
    }
    for ((name, rows, cols), slot) in expected.iter().zip(params.slices_mut()) {
        let values = rawio::read_f64s(&dir.join(format!("{name}.bin")), rows * cols)?;
        slot.copy_from_slice(&values);
    }
    if !params.is_finite() {
        return Err(Error::format(dir, "checkpoint holds non-finite parameters"));
    }
    Ok(Checkpoint {
        params,
        n_grid: man.n_grid,
        k: man.k,
        seed: man.seed,
        config_hash: man.config_hash,
    })
}
