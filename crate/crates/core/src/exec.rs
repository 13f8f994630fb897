//! Data-parallel execution of independent work items.
//!
//! Everything Monte Carlo in this crate is expressed as "map a function
//! over item indices 0..n", with each item deriving its own RNG streams
//! from [`crate::rng::stream`]. Results are collected in index order, so
//! the parallel and sequential paths are bit-identical and aggregation
//! stays order-independent.
//!
//! The `parallel` feature (default) backs [`map_indexed`] with rayon; with
//! the feature disabled the fallback is a plain sequential map.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential reference path, kept available for benchmarks and equality
/// tests regardless of features.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Caps the rayon worker pool. Call once, before any parallel work; later
/// calls are ignored. A no-op without the `parallel` feature.
pub fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
