//! Deterministic data-parallel helpers.
//!
//! Work is split into fixed chunks whose results never depend on the
//! scheduling order, so the parallel and serial paths are bit-identical.
//! With the `parallel` feature disabled, or after [`set_serial`]`(true)`,
//! everything runs on the calling thread.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SERIAL: AtomicBool = AtomicBool::new(false);

pub fn set_serial(serial: bool) {
    FORCE_SERIAL.store(serial, Ordering::Relaxed);
}

pub fn is_serial() -> bool {
    !cfg!(feature = "parallel") || FORCE_SERIAL.load(Ordering::Relaxed)
}

/// Applies a worker-count cap. `0` selects the serial path.
///
/// The global rayon pool can only be sized once per process; later calls
/// with a nonzero cap only toggle the serial switch.
pub fn configure_threads(threads: usize) {
    if threads == 0 {
        set_serial(true);
        return;
    }
    set_serial(false);
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

/// Calls `f(chunk_index, chunk)` for consecutive `chunk`-sized pieces of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if !is_serial() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// `(0..n).map(f).collect()`, possibly in parallel, always in index order.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if !is_serial() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}
