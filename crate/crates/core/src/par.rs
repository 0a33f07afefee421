//! Ordered data-parallel maps.
//!
//! With the `parallel` feature the maps run on the rayon global pool (or
//! whatever pool the caller installs); without it they run sequentially.
//! Results always come back in index order, so any reduction the caller does
//! afterwards is independent of the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluate `f(0..n)` and collect the results in index order.
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

/// Map over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Fold fixed-size chunks of `0..n` in parallel and combine the partial
/// results left to right.
///
/// Chunk boundaries depend only on `chunk`, never on the thread count, so
/// floating-point sums are bit-identical across pool sizes.
pub fn chunked_fold<A, I, F, R>(n: usize, chunk: usize, init: I, fold: F, combine: R) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    R: Fn(A, A) -> A,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    let partials = map_indexed(n_chunks, |c| {
        let mut acc = init();
        let end = ((c + 1) * chunk).min(n);
        for i in c * chunk..end {
            fold(&mut acc, i);
        }
        acc
    });
    partials.into_iter().fold(init(), combine)
}
