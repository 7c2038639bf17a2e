//! Index-ordered parallel map with a sequential fallback.
//!
//! With the `parallel` feature, work is spread over a rayon pool; results
//! always come back in index order so reductions do not depend on
//! scheduling.

use crate::error::{ExecError, Result};

/// Applies `f` to `0..n` and collects the results in index order.
///
/// `workers = Some(1)` forces the sequential path, `Some(k)` uses a dedicated
/// pool with `k` threads and `None` uses the global pool.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    match workers {
        Some(0) => Err(ExecError::Config("worker count must be positive".into())),
        Some(1) => Ok((0..n).map(f).collect()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| ExecError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
        }
        None => Ok((0..n).into_par_iter().map(f).collect()),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers == Some(0) {
        return Err(ExecError::Config("worker count must be positive".into()));
    }
    Ok((0..n).map(f).collect())
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
