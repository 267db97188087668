//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while setting up or advancing a run.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scheme requires a {expected} grid, got {found}")]
    WrongLattice {
        expected: &'static str,
        found: &'static str,
    },

    #[error("field diverged at row {row}: |phi| = {value:e} exceeds bound {bound:e}")]
    Diverged { row: i64, value: f64, bound: f64 },

    #[error("singular update at row {row}, site {site}: {detail}")]
    Singular {
        row: i64,
        site: usize,
        detail: String,
    },

    #[error("cell solve failed to converge at row {row}, site {site}: |residual| = {residual:e} after {iterations} iterations")]
    NonConvergence {
        row: i64,
        site: usize,
        residual: f64,
        iterations: usize,
    },

    #[error(transparent)]
    Solver(#[from] crate::nlsolve::SolveError),

    #[error("elliptic modulus out of range: m = {0}")]
    Modulus(f64),

    #[error("ode step size underflow at t = {0}")]
    StepUnderflow(f64),

    #[error("refusing to overwrite existing file {0} (use --force)")]
    OutputExists(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status: 2 configuration, 3 divergence, 4 solver
    /// failure, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::WrongLattice { .. } => 2,
            Error::Diverged { .. } => 3,
            Error::Singular { .. }
            | Error::NonConvergence { .. }
            | Error::Solver(_)
            | Error::Modulus(_)
            | Error::StepUnderflow(_) => 4,
            Error::OutputExists(_) | Error::Io { .. } | Error::Json(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
