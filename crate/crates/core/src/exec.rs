//! Bulk-synchronous task execution.
//!
//! Results are always returned in index order, so any executor yields bit-identical
//! numerics as long as each task is itself deterministic.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluates `f(0), .., f(n-1)` and returns the results in index order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;

    /// Milliseconds since some fixed origin, if a clock is available.
    fn now_ms(&self) -> Option<f64> {
        None
    }

    fn workers(&self) -> usize {
        1
    }
}

/// Runs every task on the calling thread.
#[derive(Debug, Clone)]
pub struct Sequential {
    #[cfg(feature = "std")]
    origin: std::time::Instant,
}

impl Sequential {
    pub fn new() -> Self {
        Sequential {
            #[cfg(feature = "std")]
            origin: std::time::Instant::now(),
        }
    }
}

impl Default for Sequential {
    fn default() -> Self {
        Self::new()
    }
}

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }

    #[cfg(feature = "std")]
    fn now_ms(&self) -> Option<f64> {
        Some(self.origin.elapsed().as_secs_f64() * 1e3)
    }
}
