//! Thread-count control and order-preserving parallel maps.
//!
//! The crate's hot loops are per-sample maps (attack generation, evaluation,
//! per-particle gradients). [`par_map`] runs them on rayon when the
//! `parallel` feature is on and more than one thread is requested, and
//! falls back to a plain sequential map otherwise. The map preserves input
//! order and all reductions happen after collection, so the output is
//! bit-identical for any thread count; `threads = 1` is still the
//! reproducibility reference mode.

use std::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Sets the worker thread count for subsequent parallel maps.
///
/// `0` means auto (one worker per available core). With the `parallel`
/// feature disabled this is recorded but everything stays sequential.
pub fn set_threads(n: usize) {
    let n = if n == 0 {
        std::thread::available_parallelism().map_or(1, |p| p.get())
    } else {
        n
    };
    THREADS.store(n, Ordering::Relaxed);
    #[cfg(feature = "parallel")]
    if n > 1 {
        // The global pool can only be built once per process; a failure here
        // just means an earlier call already sized it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Currently requested worker thread count.
pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

/// Order-preserving map over a slice, parallel when enabled.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if threads() > 1 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Order-preserving map over an index range, parallel when enabled.
pub fn par_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if threads() > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let items: Vec<u64> = (0..100).collect();
        let seq: Vec<u64> = items.iter().map(|x| x * 3).collect();
        set_threads(2);
        let par = par_map(&items, |x| x * 3);
        set_threads(1);
        assert_eq!(seq, par);
    }
}
