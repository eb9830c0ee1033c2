//! Thin wrappers so the crate builds with or without rayon. Every helper
//! preserves input order, so results do not depend on the thread count.

const CHUNK: usize = 4096;

/// Folds fixed-size chunks independently and merges the partial results.
/// `merge` must be associative and order-insensitive for the result to be
/// deterministic (integer counters are).
pub fn fold_chunks<T, A, F, M>(items: &[T], fold: F, merge: M) -> A
where
    T: Sync,
    A: Send + Default,
    F: Fn(&[T]) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items
            .par_chunks(CHUNK)
            .map(&fold)
            .reduce(A::default, &merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.chunks(CHUNK).map(&fold).fold(A::default(), &merge)
    }
}

/// Order-preserving map.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` on a pool of `threads` workers (0 = rayon default). Without the
/// `parallel` feature this just calls `f`.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
