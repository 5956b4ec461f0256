//! Execution-mode helpers for data-parallel loops.
//!
//! With the `parallel` feature (on by default) the loops below run on the
//! rayon pool; without it they compile to plain sequential iteration and
//! rayon is not linked at all. Every call site is a per-index map with a
//! deterministic output per index, so results are bitwise identical in both
//! modes and at any thread count.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static SEQUENTIAL_OVERRIDE: AtomicBool = AtomicBool::new(false);

/// Force the sequential path at runtime even when compiled with `parallel`.
///
/// Exists so the benchmark suite can compare both execution modes in a
/// single binary; results do not depend on the mode.
pub fn force_sequential(on: bool) {
    SEQUENTIAL_OVERRIDE.store(on, Ordering::SeqCst);
}

/// True when data-parallel loops will actually run on the rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !SEQUENTIAL_OVERRIDE.load(Ordering::Relaxed)
}

/// Map `f` over `0..n`, preserving index order in the output.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Apply `f` to consecutive `chunk`-sized pieces of `data` (last may be
/// shorter), passing the chunk index.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    debug_assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}
