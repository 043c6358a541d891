use std::time::Instant;

use potgame_core::exec::Executor;
use rayon::prelude::*;

use crate::error::CliError;

/// Default worker count when `--workers` is not given.
pub const WORKERS_ENV: &str = "POTGAME_WORKERS";

/// Executes tasks on a dedicated rayon pool. Results come back in index order, so
/// outputs do not depend on the worker count.
pub struct Parallel {
    pool: rayon::ThreadPool,
    workers: usize,
    origin: Instant,
}

impl Parallel {
    pub fn new(workers: usize) -> Result<Self, CliError> {
        if workers == 0 {
            return Err(CliError::config("workers", "must be >= 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::config("workers", e.to_string()))?;
        Ok(Parallel {
            pool,
            workers,
            origin: Instant::now(),
        })
    }
}

impl Executor for Parallel {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }

    fn now_ms(&self) -> Option<f64> {
        Some(self.origin.elapsed().as_secs_f64() * 1e3)
    }

    fn workers(&self) -> usize {
        self.workers
    }
}

/// Worker count from the environment, falling back to the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&w: &usize| w >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
