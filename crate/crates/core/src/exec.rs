//! Serial/parallel execution of data-parallel loops.
//!
//! Every helper here produces the same values in the same order whichever
//! path runs; callers never depend on scheduling.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SERIAL: AtomicBool = AtomicBool::new(false);

/// Enables or disables the rayon path at runtime. No effect without the
/// `parallel` feature.
pub fn set_parallel(enabled: bool) {
    FORCE_SERIAL.store(!enabled, Ordering::SeqCst);
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && !FORCE_SERIAL.load(Ordering::SeqCst)
}

/// Sizes the global worker pool. `1` selects the serial path. The pool can
/// only be sized once per process; later calls just toggle the switch.
pub fn configure_workers(workers: usize) {
    set_parallel(workers != 1);
    #[cfg(feature = "parallel")]
    if workers > 1 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}

/// Calls `f(chunk_index, chunk)` on consecutive `chunk_len`-sized chunks.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Calls `f(i, a_chunk, b_chunk)` over matching chunks of two slices.
pub fn for_each_chunk_zip<T, U, F>(a: &mut [T], b: &[U], chunk_len: usize, f: F)
where
    T: Send,
    U: Sync,
    F: Fn(usize, &mut [T], &[U]) + Sync + Send,
{
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        a.par_chunks_mut(chunk_len)
            .zip(b.par_chunks(chunk_len))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
        return;
    }
    a.chunks_mut(chunk_len)
        .zip(b.chunks(chunk_len))
        .enumerate()
        .for_each(|(i, (x, y))| f(i, x, y));
}

/// `(0..n).map(f).collect()` with results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Sum of `f(i)` over chunks, combined in a fixed order so the result does
/// not depend on scheduling.
pub fn sum_chunks<F>(n: usize, chunk_len: usize, f: F) -> f64
where
    F: Fn(std::ops::Range<usize>) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(chunk_len.max(1));
    map_indexed(chunks, |c| {
        let start = c * chunk_len;
        f(start..(start + chunk_len).min(n))
    })
    .into_iter()
    .sum()
}
