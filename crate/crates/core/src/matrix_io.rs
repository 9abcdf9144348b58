//! Persistence for `OperatorMatrix`: `<name>.bin` holds the row-major
//! little-endian payload, `<name>.manifest` the role and shape.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{OperatorMatrix, Role};
use crate::rawio;

pub const MATRIX_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct MatrixManifest {
    schema_version: u32,
    role: Role,
    rows: usize,
    cols: usize,
}

pub fn write_matrix(matrix: &OperatorMatrix, dir: &Path, name: &str) -> Result<()> {
    rawio::create_dir(dir)?;
    rawio::write_toml(
        &dir.join(format!("{name}.manifest")),
        &MatrixManifest {
            schema_version: MATRIX_SCHEMA_VERSION,
            role: matrix.role,
            rows: matrix.rows(),
            cols: matrix.cols(),
        },
    )?;
    let row_major = matrix.data.transpose();
    rawio::write_f64s(&dir.join(format!("{name}.bin")), row_major.as_slice())
}

pub fn read_matrix(dir: &Path, name: &str) -> Result<OperatorMatrix> {
    let manifest_path = dir.join(format!("{name}.manifest"));
    rawio::check_version(&manifest_path, MATRIX_SCHEMA_VERSION)?;
    let m: MatrixManifest = rawio::read_toml(&manifest_path)?;
    if m.rows == 0 || m.cols == 0 {
        return Err(Error::format(&manifest_path, "matrix has an empty dimension"));
    }
    let values = rawio::read_f64s(&dir.join(format!("{name}.bin")), m.rows * m.cols)?;
    OperatorMatrix::new(m.role, DMatrix::from_row_slice(m.rows, m.cols, &values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_role_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let data = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m = OperatorMatrix::new(Role::WeightsW, data).unwrap();
        write_matrix(&m, dir.path(), "w").unwrap();
        let raw = std::fs::read(dir.path().join("w.bin")).unwrap();
        assert_eq!(raw[8..16], 2.0f64.to_le_bytes());
        assert_eq!(read_matrix(dir.path(), "w").unwrap(), m);
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = OperatorMatrix::new(Role::StencilL, DMatrix::identity(3, 3)).unwrap();
        write_matrix(&m, dir.path(), "l").unwrap();
        std::fs::write(dir.path().join("l.bin"), [0u8; 20]).unwrap();
        assert!(matches!(read_matrix(dir.path(), "l"), Err(Error::LengthMismatch { .. })));
    }
}
