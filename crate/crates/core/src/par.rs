//! Data-parallel execution helpers.
//!
//! Column solves, search candidates, and identity checks are independent
//! tasks over immutable inputs. With the `parallel` feature (default) they
//! run on rayon; without it, or when the sequential override is set (used
//! by the benchmark suite for comparison), they run in order. Results are
//! always collected in input order, so the outcome is deterministic either
//! way.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force sequential execution at runtime (used by benches and tests).
pub fn set_sequential_override(v: bool) {
    FORCE_SEQUENTIAL.store(v, Ordering::SeqCst);
}

pub fn sequential_override() -> bool {
    FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    if sequential_override() {
        items.into_iter().map(f).collect()
    } else {
        items.into_par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}
