//! Per-thread bookkeeping of dense materializations performed by the operator layer.
//!
//! Every place that turns an operator (or a kernel Gramian) into a dense matrix reports the
//! shape here, so callers can assert that a run never allocated a `D × D` block.

use std::cell::Cell;

thread_local! {
    static LARGEST: Cell<(usize, usize)> = const { Cell::new((0, 0)) };
    static COUNT: Cell<usize> = const { Cell::new(0) };
}

pub fn record_dense(rows: usize, cols: usize) {
    LARGEST.with(|l| {
        let (r, c) = l.get();
        if rows * cols > r * c {
            l.set((rows, cols));
        }
    });
    COUNT.with(|c| c.set(c.get() + 1));
}

/// Shape of the largest dense materialization since the last [`reset`].
pub fn largest_dense() -> (usize, usize) {
    LARGEST.with(|l| l.get())
}

pub fn dense_count() -> usize {
    COUNT.with(|c| c.get())
}

pub fn reset() {
    LARGEST.with(|l| l.set((0, 0)));
    COUNT.with(|c| c.set(0));
}
