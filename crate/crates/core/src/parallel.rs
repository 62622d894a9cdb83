//! Replica fan-out.
//!
//! Replicas are independent jobs indexed `0..n`; results always come back
//! in index order, so the output does not depend on the execution mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to run a batch of independent replicas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is on, otherwise
    /// falls back to sequential execution.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluate `job(i)` for `i in 0..n` and collect the results in order.
pub fn map_replicas<T, F>(exec: Execution, n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(job).collect();
    }
    let _ = exec;
    (0..n).map(job).collect()
}

/// Like [`map_replicas`] but stops at the first error, by index order.
pub fn try_map_replicas<T, E, F>(exec: Execution, n: usize, job: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_replicas(exec, n, job).into_iter().collect()
}
