use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Dataset, Family, FunctionClass, Grid};
use crate::error::{Error, Result};
use crate::rawio;
use crate::rng::RNG_NAME;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// Contents of a dataset directory's `manifest` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub family: Family,
    pub p: usize,
    pub n_grid: usize,
    /// Interior node count; must equal `n_grid - 1`.
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub k: f64,
    pub norm_scale: f64,
    pub rng: String,
    pub nodes: String,
}

impl DatasetManifest {
    pub fn of(d: &Dataset) -> Self {
        Self {
            schema_version: DATASET_SCHEMA_VERSION,
            family: d.class.family,
            p: d.class.p,
            n_grid: d.grid.n_grid(),
            m: d.m(),
            n: d.len(),
            seed: d.seed,
            k: d.k,
            norm_scale: d.norm_scale,
            rng: RNG_NAME.to_string(),
            nodes: "interior".to_string(),
        }
    }
}

/// Writes `manifest`, `f.bin` and `u.bin` into `dir`, creating it if needed.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    rawio::create_dir(dir)?;
    rawio::write_toml(&dir.join("manifest"), &DatasetManifest::of(dataset))?;
    // Column-major M x N is the row-major N x M on-disk layout.
    rawio::write_f64s(&dir.join("f.bin"), dataset.f.as_slice())?;
    rawio::write_f64s(&dir.join("u.bin"), dataset.u.as_slice())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest");
    rawio::check_version(&manifest_path, DATASET_SCHEMA_VERSION)?;
    let m: DatasetManifest = rawio::read_toml(&manifest_path)?;
    let bad = |msg: String| Err(Error::format(&manifest_path, msg));
    if m.n_grid < 2 {
        return bad(format!("n_grid = {} is below 2", m.n_grid));
    }
    if m.m != m.n_grid - 1 {
        return bad(format!("m = {} disagrees with n_grid = {}", m.m, m.n_grid));
    }
    if m.n == 0 {
        return bad("dataset holds no samples".into());
    }
    if m.rng != RNG_NAME {
        return bad(format!("generated with rng '{}', expected '{RNG_NAME}'", m.rng));
    }
    if !(m.k > 0.0) || !(m.norm_scale > 0.0) {
        return bad("k and norm_scale must be positive".into());
    }
    let len = m.m * m.n;
    let f = rawio::read_f64s(&dir.join("f.bin"), len)?;
    let u = rawio::read_f64s(&dir.join("u.bin"), len)?;
    if f.iter().chain(&u).any(|v| !v.is_finite()) {
        return Err(Error::format(dir, "payload contains non-finite values"));
    }
    Ok(Dataset {
        grid: Grid::new(m.n_grid)?,
        class: FunctionClass::new(m.family, m.p),
        seed: m.seed,
        k: m.k,
        norm_scale: m.norm_scale,
        f: DMatrix::from_vec(m.m, m.n, f),
        u: DMatrix::from_vec(m.m, m.n, u),
    })
}
