use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

/// Millisecond timestamps for samples, alerts and history entries.
///
/// The logical clock advances by one on every read, which makes persisted
/// state and demo reports reproducible.
#[derive(Debug, Clone, Default)]
pub enum Clock {
    #[default]
    System,
    Logical(Arc<AtomicU64>),
}

impl Clock {
    pub fn logical() -> Self {
        Clock::Logical(Arc::new(AtomicU64::new(0)))
    }

    pub fn now_ms(&self) -> u64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            Clock::Logical(t) => t.fetch_add(1, Ordering::SeqCst) + 1,
        }
    }

    /// Moves a logical clock forward so later reads exceed `ms`. Used after
    /// restoring persisted state.
    pub fn advance_to(&self, ms: u64) {
        if let Clock::Logical(t) = self {
            t.fetch_max(ms, Ordering::SeqCst);
        }
    }
}
