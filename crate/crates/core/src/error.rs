use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: n_grid must be at least 2, got {0}")]
    InvalidGrid(usize),

    #[error("invalid forcing spec: {0}")]
    InvalidSpec(String),

    #[error("family {0} has no closed-form solver; use the FEM solver")]
    WrongSolver(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("cannot normalize: every solution vector has zero norm")]
    DegenerateNormalization,

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("matrix has numerical rank zero")]
    RankZero,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported stencil order {0}; expected 2 or 4")]
    UnsupportedStencil(usize),

    #[error("degenerate finite-difference fit: stencil response is identically zero")]
    DegenerateFit,

    #[error("vector of length {len} is too short for a stencil of width {width}")]
    TooShort { len: usize, width: usize },

    #[error("training diverged at epoch {epoch} (lr = {lr:e})")]
    Divergence { epoch: usize, lr: f64 },

    #[error("every run diverged for training family {0}")]
    AllDiverged(String),

    #[error("model and dataset are incompatible: {0}")]
    Incompatible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: payload holds {found} values, manifest implies {expected}")]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: schema version {found} is not supported (expected {expected})")]
    Version {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics (solves, fits, training) as opposed
    /// to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Solver(_)
                | Error::DegenerateNormalization
                | Error::RankZero
                | Error::DegenerateFit
                | Error::Divergence { .. }
                | Error::AllDiverged(_)
        )
    }
}
