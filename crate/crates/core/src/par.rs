//! Node-indexed parallel maps.
//!
//! With the `parallel` feature and more than one rayon worker the map runs on
//! the current rayon pool; otherwise it is a plain sequential iterator. Results
//! are collected by index in both cases, so output never depends on scheduling.

/// `(0..n).map(f).collect()`, in parallel when available.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if rayon::current_num_threads() > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Whether [`map_indices`] would currently fan out.
pub fn is_parallel() -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads() > 1
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}
