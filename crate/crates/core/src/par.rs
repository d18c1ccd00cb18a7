//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default), independent work items run on the
//! rayon pool; results are collected by index so output is identical to the
//! sequential build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Sync, U: Send, F: Fn(&T) -> U + Sync>(items: &[T], f: F) -> Vec<U> {
    items.par_iter().map(|x| f(x)).collect()
}

/// Map `f` over `items`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(|x| f(x)).collect()
}

/// Always-sequential variant, kept callable from benches for comparison.
pub fn map_indexed_seq<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(|x| f(x)).collect()
}

/// Configure the global thread pool size. A `jobs` of 0 leaves the default.
#[cfg(feature = "parallel")]
pub fn configure_jobs(jobs: usize) {
    if jobs > 0 {
        // Ignore the error if a pool was already built.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

#[cfg(not(feature = "parallel"))]
pub fn configure_jobs(_jobs: usize) {}
