//! Tori benchmark driver: point clouds, diffusion spectra, LES/GLES sweeps,
//! learned weights and the GBW convergence suite, with CSV output.
//!
//! Every random draw comes from [`seeds::child_seed`], so results depend on
//! the configuration and master seed only, never on thread scheduling.

pub mod config;
pub mod output;
pub mod runner;
pub mod seeds;

pub use config::{BenchmarkConfig, Method};
pub use runner::{BenchReport, Pair, TrialResult};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] procrustes_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{failed} of {total} trials failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl BenchError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::TooManyFailures { .. } => 3,
            _ => 1,
        }
    }
}
