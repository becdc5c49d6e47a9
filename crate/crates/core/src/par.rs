//! Data-parallel helpers. With the `parallel` feature these dispatch to rayon;
//! without it they run the same closures sequentially.
//!
//! Reductions split work into fixed-size chunks and combine partial results in
//! chunk order, so floating-point results do not depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) const SUM_CHUNK: usize = 1024;

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Maps `f` over `0..len`, preserving order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
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

/// Deterministic sum of `f(i)` for `i` in `0..len`.
pub fn sum_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(SUM_CHUNK);
    map_indexed(chunks, |c| {
        let end = ((c + 1) * SUM_CHUNK).min(len);
        (c * SUM_CHUNK..end).map(&f).sum::<f64>()
    })
    .into_iter()
    .sum()
}

/// Maximum of `f(i)` over `0..len` (NEG_INFINITY when empty).
pub fn max_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(SUM_CHUNK);
    map_indexed(chunks, |c| {
        let end = ((c + 1) * SUM_CHUNK).min(len);
        (c * SUM_CHUNK..end).map(&f).fold(f64::NEG_INFINITY, f64::max)
    })
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}

/// Runs `f(chunk_index, chunk)` over consecutive `chunk_len`-sized pieces of
/// `data` and collects the results in chunk order.
pub fn map_chunks_mut<T, U, F>(data: &mut [T], chunk_len: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T]) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len).enumerate().map(|(i, c)| f(i, c)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len).enumerate().map(|(i, c)| f(i, c)).collect()
    }
}
