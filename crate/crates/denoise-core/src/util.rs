//! Small shared helpers.

/// Work items per parallel batch. Large enough that the per-batch sync
/// barrier is negligible, small enough to bound the memory held by
/// per-item results.
const BATCH: usize = 1024;

/// Maps `items` through `work` (possibly in parallel) and folds the results
/// sequentially in item order.
///
/// The fold order is fixed, so floating-point accumulation is bit-identical
/// for any worker count. `work` must be a pure function of its argument.
#[cfg(feature = "parallel")]
pub fn map_fold_ordered<I, T, W, F>(items: &[I], work: W, mut fold: F)
where
    I: Sync,
    T: Send,
    W: Fn(&I) -> T + Sync,
    F: FnMut(T),
{
    use rayon::prelude::*;
    for batch in items.chunks(BATCH) {
        let results: alloc::vec::Vec<T> = batch.par_iter().map(&work).collect();
        for r in results {
            fold(r);
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_fold_ordered<I, T, W, F>(items: &[I], work: W, mut fold: F)
where
    W: Fn(&I) -> T,
    F: FnMut(T),
{
    let _ = BATCH;
    for item in items {
        fold(work(item));
    }
}

