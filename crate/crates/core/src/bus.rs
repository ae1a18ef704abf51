//! Robot-side publish/subscribe bus.
//!
//! Topics are registered once with a mode. Latest-value topics keep only the
//! newest record; queued topics keep a bounded FIFO that drops its oldest
//! record on overflow. Publishing never blocks on a subscriber.

use std::any::Any;
use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, RwLock};
use thiserror::Error;

use crate::cell::LatestCell;

/// Default bound for queued topics.
pub const DEFAULT_QUEUE_CAP: usize = 1024;

pub const JOINT_STATES: &str = "/joint_states";
pub const CONTROLLER_STATUS: &str = "/controller_status";
pub const OPERATOR_CMDS: &str = "/operator_cmds";
pub const EVENTS: &str = "/events";
pub const CONSTRAINTS: &str = "/constraints";
pub const SCENE: &str = "/scene";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("unknown topic '{0}'")]
    UnknownTopic(String),
    #[error("topic '{0}' already registered")]
    AlreadyRegistered(String),
    #[error("topic '{topic}' carries {expected}, not {requested}")]
    WrongType {
        topic: String,
        expected: &'static str,
        requested: &'static str,
    },
    #[error("topic '{0}' is registered with a different mode")]
    WrongMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicMode {
    Latest,
    Queued { cap: usize },
}

/// A record plus the bus-assigned sequence number and timestamp (seconds
/// since the bus was created).
#[derive(Debug, Clone, PartialEq)]
pub struct Stamped<T> {
    pub seq: u64,
    pub t: f64,
    pub value: T,
}

pub struct LatestTopic<T> {
    name: String,
    epoch: Instant,
    seq: AtomicU64,
    cell: LatestCell<Stamped<T>>,
}

impl<T> LatestTopic<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn publish(&self, value: T) -> u64 {
        let seq = self.seq.fetch_add(1, Ordering::AcqRel) + 1;
        let t = self.epoch.elapsed().as_secs_f64();
        self.cell.write(Stamped { seq, t, value });
        seq
    }

    pub fn latest(&self) -> Option<Arc<Stamped<T>>> {
        self.cell.read()
    }

    pub fn subscribe(self: &Arc<Self>) -> LatestSubscriber<T> {
        LatestSubscriber {
            topic: self.clone(),
            last_seq: 0,
        }
    }
}

/// Reader of a latest-value topic that remembers what it has already seen.
pub struct LatestSubscriber<T> {
    topic: Arc<LatestTopic<T>>,
    last_seq: u64,
}

impl<T> LatestSubscriber<T> {
    /// Newest record if it is newer than the last one returned.
    pub fn next_new(&mut self) -> Option<Arc<Stamped<T>>> {
        let rec = self.topic.latest()?;
        if rec.seq > self.last_seq {
            self.last_seq = rec.seq;
            Some(rec)
        } else {
            None
        }
    }

    pub fn latest(&self) -> Option<Arc<Stamped<T>>> {
        self.topic.latest()
    }

    pub fn topic(&self) -> &Arc<LatestTopic<T>> {
        &self.topic
    }
}

pub struct QueuedTopic<T> {
    name: String,
    epoch: Instant,
    cap: usize,
    seq: AtomicU64,
    dropped: AtomicU64,
    queue: Mutex<VecDeque<Stamped<T>>>,
    ready: Condvar,
}

impl<T> QueuedTopic<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn publish(&self, value: T) -> u64 {
        let mut queue = self.queue.lock();
        // Sequence assigned under the lock so queue order matches seq order.
        let seq = self.seq.fetch_add(1, Ordering::AcqRel) + 1;
        let t = self.epoch.elapsed().as_secs_f64();
        if queue.len() >= self.cap {
            queue.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        queue.push_back(Stamped { seq, t, value });
        drop(queue);
        self.ready.notify_one();
        seq
    }

    pub fn try_pop(&self) -> Option<Stamped<T>> {
        self.queue.lock().pop_front()
    }

    pub fn pop_timeout(&self, timeout: Duration) -> Option<Stamped<T>> {
        let deadline = Instant::now() + timeout;
        let mut queue = self.queue.lock();
        loop {
            if let Some(rec) = queue.pop_front() {
                return Some(rec);
            }
            if self.ready.wait_until(&mut queue, deadline).timed_out() {
                return queue.pop_front();
            }
        }
    }

    pub fn drain(&self) -> Vec<Stamped<T>> {
        self.queue.lock().drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records discarded because the queue was full.
    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

struct TopicEntry {
    mode: TopicMode,
    type_name: &'static str,
    handle: Arc<dyn Any + Send + Sync>,
}

/// Registry of named topics. Cheap to share behind an `Arc`.
pub struct TopicBus {
    epoch: Instant,
    topics: RwLock<HashMap<String, TopicEntry>>,
}

impl Default for TopicBus {
    fn default() -> Self {
        Self::new()
    }
}

impl TopicBus {
    pub fn new() -> Self {
        Self {
            epoch: Instant::now(),
            topics: RwLock::new(HashMap::new()),
        }
    }

    /// Seconds since the bus was created.
    pub fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    pub fn epoch(&self) -> Instant {
        self.epoch
    }

    pub fn register_latest<T: Send + Sync + 'static>(&self, name: &str) -> Result<Arc<LatestTopic<T>>, BusError> {
        let topic = Arc::new(LatestTopic {
            name: name.to_string(),
            epoch: self.epoch,
            seq: AtomicU64::new(0),
            cell: LatestCell::new(),
        });
        self.insert::<T>(name, TopicMode::Latest, topic.clone())?;
        Ok(topic)
    }

    pub fn register_queued<T: Send + Sync + 'static>(
        &self,
        name: &str,
        cap: usize,
    ) -> Result<Arc<QueuedTopic<T>>, BusError> {
        let topic = Arc::new(QueuedTopic {
            name: name.to_string(),
            epoch: self.epoch,
            cap: cap.max(1),
            seq: AtomicU64::new(0),
            dropped: AtomicU64::new(0),
            queue: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
        });
        self.insert::<T>(name, TopicMode::Queued { cap }, topic.clone())?;
        Ok(topic)
    }

    fn insert<T: 'static>(
        &self,
        name: &str,
        mode: TopicMode,
        handle: Arc<dyn Any + Send + Sync>,
    ) -> Result<(), BusError> {
        let mut topics = self.topics.write();
        if topics.contains_key(name) {
            return Err(BusError::AlreadyRegistered(name.to_string()));
        }
        topics.insert(
            name.to_string(),
            TopicEntry {
                mode,
                type_name: std::any::type_name::<T>(),
                handle,
            },
        );
        Ok(())
    }

    pub fn mode(&self, name: &str) -> Result<TopicMode, BusError> {
        self.topics
            .read()
            .get(name)
            .map(|e| e.mode)
            .ok_or_else(|| BusError::UnknownTopic(name.to_string()))
    }

    fn lookup<H: Send + Sync + 'static, T: 'static>(&self, name: &str, latest: bool) -> Result<Arc<H>, BusError> {
        let topics = self.topics.read();
        let entry = topics
            .get(name)
            .ok_or_else(|| BusError::UnknownTopic(name.to_string()))?;
        if matches!(entry.mode, TopicMode::Latest) != latest {
            return Err(BusError::WrongMode(name.to_string()));
        }
        entry
            .handle
            .clone()
            .downcast::<H>()
            .map_err(|_| BusError::WrongType {
                topic: name.to_string(),
                expected: entry.type_name,
                requested: std::any::type_name::<T>(),
            })
    }

    pub fn latest_topic<T: Send + Sync + 'static>(&self, name: &str) -> Result<Arc<LatestTopic<T>>, BusError> {
        self.lookup::<LatestTopic<T>, T>(name, true)
    }

    pub fn queued_topic<T: Send + Sync + 'static>(&self, name: &str) -> Result<Arc<QueuedTopic<T>>, BusError> {
        self.lookup::<QueuedTopic<T>, T>(name, false)
    }

    /// Publish on a topic of either mode; returns the record's sequence number.
    pub fn publish<T: Send + Sync + 'static>(&self, name: &str, value: T) -> Result<u64, BusError> {
        match self.mode(name)? {
            TopicMode::Latest => Ok(self.latest_topic::<T>(name)?.publish(value)),
            TopicMode::Queued { .. } => Ok(self.queued_topic::<T>(name)?.publish(value)),
        }
    }

    pub fn subscribe_latest<T: Send + Sync + 'static>(&self, name: &str) -> Result<LatestSubscriber<T>, BusError> {
        Ok(self.latest_topic::<T>(name)?.subscribe())
    }
}
