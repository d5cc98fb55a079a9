//! Multiply-accumulate instrumentation for `matmul`.
//!
//! Counting is per thread and off by default. Inside [`count`], every
//! matmul of shape M×K · K×N adds M·K·N to the bucket selected by the
//! innermost [`tagged`] scope.

use std::cell::{Cell, RefCell};

/// Bucket a matmul's MACs are booked under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacTag {
    /// Anything outside a tagged scope.
    General,
    /// Linear projections (W_q, W_k, W_v, W_o, FFN, patch embeddings).
    Projection,
    /// Sequence-length-quadratic products: scores and weighted values.
    Quadratic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacCounts {
    pub general: u64,
    pub projection: u64,
    pub quadratic: u64,
}

impl MacCounts {
    pub fn total(&self) -> u64 {
        self.general + self.projection + self.quadratic
    }
}

thread_local! {
    static COUNTS: RefCell<Option<MacCounts>> = const { RefCell::new(None) };
    static TAG: Cell<MacTag> = const { Cell::new(MacTag::General) };
}

/// Runs `f` with counting enabled and returns its result with the MACs it used.
pub fn count<T>(f: impl FnOnce() -> T) -> (T, MacCounts) {
    let prev = COUNTS.with(|c| c.replace(Some(MacCounts::default())));
    let out = f();
    let counts = COUNTS.with(|c| c.replace(prev)).unwrap_or_default();
    // Nested scopes still contribute to the enclosing one.
    COUNTS.with(|c| {
        if let Some(outer) = c.borrow_mut().as_mut() {
            outer.general += counts.general;
            outer.projection += counts.projection;
            outer.quadratic += counts.quadratic;
        }
    });
    (out, counts)
}

/// Books every matmul inside `f` under `tag`.
pub fn tagged<T>(tag: MacTag, f: impl FnOnce() -> T) -> T {
    let prev = TAG.with(|t| t.replace(tag));
    let out = f();
    TAG.with(|t| t.set(prev));
    out
}

pub(crate) fn record(macs: u64) {
    COUNTS.with(|c| {
        if let Some(counts) = c.borrow_mut().as_mut() {
            match TAG.with(|t| t.get()) {
                MacTag::General => counts.general += macs,
                MacTag::Projection => counts.projection += macs,
                MacTag::Quadratic => counts.quadratic += macs,
            }
        }
    });
}
