//! Replicate-level parallelism with order-preserving collection.

use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Maps `f` over `0..count` on the current rayon pool, results in index order.
pub fn map_replicates<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Fallible variant of [`map_replicates`]; the first error in index order wins.
pub fn try_map_replicates<T, F>(count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    map_replicates(count, f).into_iter().collect()
}

/// Runs `op` inside a dedicated pool with `workers` threads.
pub fn with_workers<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Err(invalid("worker count must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(op))
}
