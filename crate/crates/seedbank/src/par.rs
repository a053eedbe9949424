//! Replicate-parallel execution.
//!
//! Monte Carlo work in this crate is a map over replicate indices. Each
//! replicate owns its RNG stream, and results are collected in index order, so
//! the output is identical for [`Execution::Sequential`] and
//! [`Execution::Parallel`] and for any worker count.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled and falls
    /// back to sequential evaluation otherwise.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluate `f(0..n)` and return the results in index order.
pub fn map_replicates<T, F>(exec: Execution, n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Run `f` on a pool with `workers` threads (`None`: global pool).
///
/// Without the `parallel` feature this simply calls `f`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        if let Some(w) = workers {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
                return pool.install(f);
            }
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let a = map_replicates(Execution::Parallel, 1000, |i| i * i);
        let b = map_replicates(Execution::Sequential, 1000, |i| i * i);
        assert_eq!(a, b);
        let c = with_workers(Some(3), || map_replicates(Execution::Parallel, 1000, |i| i * i));
        assert_eq!(a, c);
    }
}
