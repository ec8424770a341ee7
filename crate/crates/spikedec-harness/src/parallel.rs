//! Trial-level data parallelism with a sequential fallback.
//!
//! Behind the default `parallel` feature, independent trials fan out over
//! the rayon pool; without it the same closure runs in a plain loop. Both
//! paths collect results in trial order, and trials derive their randomness
//! from their own index, so the outputs are identical either way (the test
//! suite asserts this).

/// Run `f` for trials `0..trials`, results in trial order.
#[cfg(feature = "parallel")]
pub fn map_trials<T, F>(trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..trials).into_par_iter().map(f).collect()
}

/// Run `f` for trials `0..trials`, results in trial order.
#[cfg(not(feature = "parallel"))]
pub fn map_trials<T, F>(trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_trials_sequential(trials, f)
}

/// Always-sequential variant, kept available for benchmarking the parallel
/// speedup and for pinning down scheduling-independence.
pub fn map_trials_sequential<T, F>(trials: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..trials).map(f).collect()
}

/// Size the global worker pool. Callers may invoke this once before any
/// parallel work; later calls are ignored (the pool is process-global).
/// With the sequential fallback compiled in, this is a no-op.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}
