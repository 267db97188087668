//! Per-site map helper: sequential or rayon-parallel with identical results.

use rayon::prelude::*;

/// Evaluates `f(0..n)` in order. Each element is computed independently,
/// so the parallel path is bitwise identical to the sequential one.
pub fn map_sites<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}
