//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the loops run on the rayon pool;
//! without it they are plain sequential loops. Every helper hands each task a
//! disjoint slice of the output and never reduces floating-point values across
//! tasks, so results are bit-identical for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluate `f(i)` for `i in 0..n`, collected in index order.
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

/// Run `f(chunk_index, chunk)` over consecutive `chunk_len`-sized chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk_len > 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Run `f` on every element of `items`.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(&mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().for_each(f);
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().for_each(f);
    }
}

/// Element-wise `out[i] = f(i)` over a mutable slice.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    }
}

/// Cap the global worker pool at `threads`. Returns false when the pool was
/// already initialised or parallelism is compiled out.
pub fn init_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Number of workers the helpers above will use.
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
