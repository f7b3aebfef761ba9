//! Execution helpers: data-parallel node maps with a sequential fallback.
//!
//! Every kernel that goes through [`map_indexed`] does a fixed amount of work
//! per index with a deterministic per-index reduction, so results are
//! bit-identical whether the map runs on rayon, on one thread, or with the
//! `parallel` feature disabled entirely.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Route all data-parallel kernels through the plain sequential loop.
/// Outputs are identical either way; this only affects scheduling. Used by
/// the benchmark suite to compare the two code paths.
pub fn set_sequential(seq: bool) {
    FORCE_SEQUENTIAL.store(seq, Ordering::Relaxed);
}

/// True when kernels will run sequentially (forced, or feature disabled).
pub fn sequential() -> bool {
    FORCE_SEQUENTIAL.load(Ordering::Relaxed) || cfg!(not(feature = "parallel"))
}

/// Map `f` over `0..n`, collecting into a Vec, in parallel when available.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(&f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Serializes tests that flip the global sequential flag; the harness runs
/// tests concurrently in one process.
#[cfg(test)]
pub(crate) fn serial_test_guard() -> std::sync::MutexGuard<'static, ()> {
    use std::sync::{Mutex, OnceLock};
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}
