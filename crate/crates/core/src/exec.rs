//! Batch execution helpers.
//!
//! Every data-parallel loop in the crate (per-utterance forward-backward,
//! per-speaker adapter estimation, batch scoring) goes through [`map`]. With
//! the `parallel` feature it fans out over the rayon pool; without it the
//! same closure runs sequentially. Results always come back in input order
//! and reductions over them are done sequentially by the caller, so both
//! paths produce bit-identical numbers.

/// Sequential ordered map.
pub fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Parallel ordered map over the global rayon pool.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Ordered map using whichever backend the crate was built with.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    par_map(items, f)
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    seq_map(items, f)
}

/// True when the crate was compiled with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
