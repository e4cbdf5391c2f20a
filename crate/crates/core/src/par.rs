//! Replica-level data parallelism with a sequential fallback.
//!
//! Every parallel loop in the crate goes through [`map_indexed`]. Work items
//! are identified by index and carry their own RNG stream, so results are
//! identical whichever [`Execution`] mode runs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How index-parallel work is scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon global pool when the `parallel` feature is enabled,
    /// otherwise behaves like `Sequential`.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => parallel_map(n, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sizes the global worker pool. Returns false when the pool was already
/// initialised or the crate was built without the `parallel` feature.
pub fn configure_workers(workers: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        false
    }
}

/// Execution mode for a worker count: one worker runs sequentially.
pub fn execution_for(workers: usize) -> Execution {
    if workers <= 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// RNG for replica `index` of an experiment seeded with `base`.
///
/// The seed is `base ^ index`, so replica streams depend only on the pair and
/// never on scheduling.
pub fn replica_rng(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base ^ index)
}

/// RNG for batch `batch` of a Monte Carlo estimate seeded with `seed`.
pub fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn modes_agree() {
        let f = |i: usize| {
            let mut rng = replica_rng(7, i as u64);
            rng.random::<u64>()
        };
        let a = map_indexed(64, Execution::Sequential, f);
        let b = map_indexed(64, Execution::Parallel, f);
        assert_eq!(a, b);
    }

    #[test]
    fn batch_streams_differ() {
        let mut a = batch_rng(1, 0);
        let mut b = batch_rng(1, 1);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }
}
