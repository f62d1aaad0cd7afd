//! Experiment runner: convergence studies and randomized certificates.

pub mod config;
pub mod convergence;
pub mod probes;

use thiserror::Error;

use crate::expr::ExprError;
use crate::parser::ParseError;

pub use config::{ExperimentConfig, Reference};
pub use convergence::{run_convergence, ConvergenceReport};
pub use probes::{estimate_inner_rank, test_fullness, test_nondegeneracy, FullnessVerdict, InnerRankEstimate, Nondegeneracy};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "RATSPEC_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("expression is not square ({0})")]
    NotSquare(String),
    #[error("expression is not self-adjoint (relative defect {0:e}); pass force to run anyway")]
    NotSelfAdjoint(f64),
    #[error("evaluation failed: {0}")]
    Eval(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}: {1}")]
    Io(String, String),
}

/// Thread count from `RATSPEC_THREADS`, else the available parallelism.
pub fn thread_count() -> Result<usize, HarnessError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(HarnessError::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub(crate) fn worker_pool() -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))
}
