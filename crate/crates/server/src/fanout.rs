//! Per-client telemetry buffers. A client that falls behind skips straight
//! to the newest frame; no client can slow down another.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use tokio::sync::Notify;

use crate::lease::SessionId;

/// Frames a client may have pending before older ones are discarded.
pub const CLIENT_BUFFER: usize = 5;

#[derive(Debug, Default)]
pub struct TelemetrySlot {
    frames: Mutex<VecDeque<Arc<str>>>,
    notify: Notify,
    skipped: AtomicU64,
}

impl TelemetrySlot {
    pub fn push(&self, frame: Arc<str>) {
        {
            let mut q = self.frames.lock();
            if q.len() >= CLIENT_BUFFER {
                self.skipped.fetch_add(q.len() as u64, Ordering::Relaxed);
                q.clear();
            }
            q.push_back(frame);
        }
        self.notify.notify_one();
    }

    pub fn take(&self) -> Vec<Arc<str>> {
        self.frames.lock().drain(..).collect()
    }

    /// Resolves once a frame has been pushed since the last wake-up.
    pub async fn ready(&self) {
        self.notify.notified().await
    }

    pub fn skipped(&self) -> u64 {
        self.skipped.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Default)]
pub struct Fanout {
    clients: RwLock<HashMap<SessionId, Arc<TelemetrySlot>>>,
    published: AtomicU64,
}

impl Fanout {
    pub fn add(&self, id: SessionId) -> Arc<TelemetrySlot> {
        let slot = Arc::new(TelemetrySlot::default());
        self.clients.write().insert(id, slot.clone());
        slot
    }

    pub fn remove(&self, id: SessionId) {
        self.clients.write().remove(&id);
    }

    pub fn publish(&self, frame: Arc<str>) {
        for slot in self.clients.read().values() {
            slot.push(frame.clone());
        }
        self.published.fetch_add(1, Ordering::AcqRel);
    }

    pub fn published(&self) -> u64 {
        self.published.load(Ordering::Acquire)
    }

    pub fn client_count(&self) -> usize {
        self.clients.read().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slow_client_skips_to_newest() {
        let slot = TelemetrySlot::default();
        for k in 0..12 {
            slot.push(Arc::from(k.to_string()));
        }
        let got: Vec<String> = slot.take().iter().map(|s| s.to_string()).collect();
        assert_eq!(got, ["10", "11"]);
        assert_eq!(slot.skipped(), 10);
    }

    #[test]
    fn every_client_receives_a_subsequence_ending_at_the_last_frame() {
        let fan = Fanout::default();
        let slots: Vec<_> = (0..3).map(|k| fan.add(SessionId(k))).collect();
        let mut seen = vec![Vec::new(); 3];
        for k in 1..=100u32 {
            fan.publish(Arc::from(k.to_string()));
            // Client 0 keeps up, client 1 drains every 7 frames, client 2
            // only at the end.
            for (i, slot) in slots.iter().enumerate() {
                if i == 0 || (i == 1 && k % 7 == 0) {
                    seen[i].extend(slot.take().iter().map(|s| s.parse::<u32>().unwrap()));
                }
            }
        }
        for (i, slot) in slots.iter().enumerate() {
            seen[i].extend(slot.take().iter().map(|s| s.parse::<u32>().unwrap()));
            assert!(seen[i].windows(2).all(|w| w[1] > w[0]));
            assert_eq!(*seen[i].last().unwrap(), 100);
        }
        assert_eq!(seen[0].len(), 100);
        assert_eq!(fan.published(), 100);
    }
}
