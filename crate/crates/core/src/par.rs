//! Data-parallel helpers.
//!
//! With the `parallel` feature every helper fans out over the current rayon
//! pool; without it they run sequentially. Results are always collected in
//! index order and reduced by [`pairwise_sum`], so floating point output does
//! not depend on the number of workers.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(i)` for `i in 0..n` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().with_min_len(64).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Coarse-grained variant of [`map_indexed`] for expensive items (trials,
/// per-sample integrals): no minimum chunk length.
pub fn map_tasks<T, F>(n: usize, f: F) -> Vec<T>
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

/// Fills `out[k] = f(k)` in parallel chunks.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    const CHUNK: usize = 256;
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = f(base + j);
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (k, v) in out.iter_mut().enumerate() {
            *v = f(k);
        }
    }
}

/// Calls `f(k, slab)` for each consecutive `slab_len`-sized chunk of `out`.
pub fn fill_slabs<F>(out: &mut [f64], slab_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(slab_len)
            .enumerate()
            .for_each(|(k, s)| f(k, s));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (k, s) in out.chunks_mut(slab_len).enumerate() {
            f(k, s);
        }
    }
}

/// Number of worker threads the helpers will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Fixed-order pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise-summed dot product `sum_k w[k] * v[k]`.
pub fn weighted_sum(w: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), v.len());
    const BASE: usize = 32;
    if w.len() <= BASE {
        let mut s = 0.0;
        for (a, b) in w.iter().zip(v) {
            s += a * b;
        }
        return s;
    }
    let mid = w.len() / 2;
    weighted_sum(&w[..mid], &v[..mid]) + weighted_sum(&w[mid..], &v[mid..])
}

/// Mean via [`pairwise_sum`]; `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&dev) / (xs.len() - 1) as f64
}
