use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use arc_swap::ArcSwapOption;

/// Single-slot latest-value cell. Writers replace the whole record with one
/// atomic pointer swap, so readers never block and never see a torn value.
#[derive(Debug)]
pub struct LatestCell<T> {
    slot: ArcSwapOption<T>,
    writes: AtomicU64,
}

impl<T> Default for LatestCell<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> LatestCell<T> {
    pub fn new() -> Self {
        Self {
            slot: ArcSwapOption::empty(),
            writes: AtomicU64::new(0),
        }
    }

    pub fn with_value(value: T) -> Self {
        let cell = Self::new();
        cell.write(value);
        cell
    }

    pub fn write(&self, value: T) {
        self.write_arc(Arc::new(value));
    }

    pub fn write_arc(&self, value: Arc<T>) {
        self.slot.store(Some(value));
        self.writes.fetch_add(1, Ordering::Release);
    }

    /// Most recent complete record, or `None` if nothing was ever written.
    pub fn read(&self) -> Option<Arc<T>> {
        self.slot.load_full()
    }

    /// Number of writes so far. Lets a reader detect a fresh value without
    /// comparing payloads.
    pub fn write_count(&self) -> u64 {
        self.writes.load(Ordering::Acquire)
    }
}
