//! Desk-scale benchmark for learning the 1D Poisson solution operator.
//!
//! `datasets` produces exact `(f, u)` pairs, `oracle` computes the
//! theoretically optimal parameters, `models` trains the model zoo and
//! `harness` runs cross-family evaluations, probes and sweeps.

pub mod datasets;
pub mod error;
pub mod harness;
pub mod matrix_io;
pub mod models;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod tridiag;

mod rawio;

pub use error::{Error, Result};

/// Benchmark revision recorded in every manifest.
pub const REVISION: &str = "1";
