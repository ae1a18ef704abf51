//! Fixed-rate executors and cycle-time bookkeeping.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

/// Shared stop flag checked once per cycle.
#[derive(Debug, Clone, Default)]
pub struct Cancel(Arc<AtomicBool>);

impl Cancel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Release);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Acquire)
    }
}

/// Cycle start timestamps of one executor.
#[derive(Debug)]
pub struct TimingLog {
    epoch: Instant,
    cap: usize,
    starts_ns: Mutex<Vec<u64>>,
}

impl TimingLog {
    /// Keeps at most `cap` samples; later cycles are not recorded.
    pub fn new(cap: usize) -> Self {
        Self {
            epoch: Instant::now(),
            cap,
            starts_ns: Mutex::new(Vec::with_capacity(cap.min(1 << 20))),
        }
    }

    pub fn record(&self, at: Instant) {
        let ns = at.saturating_duration_since(self.epoch).as_nanos() as u64;
        let mut starts = self.starts_ns.lock();
        if starts.len() < self.cap {
            starts.push(ns);
        }
    }

    pub fn len(&self) -> usize {
        self.starts_ns.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Differences between consecutive cycle starts, in nanoseconds.
    pub fn periods_ns(&self) -> Vec<u64> {
        let starts = self.starts_ns.lock();
        starts.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Summary of a set of durations, all in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl CycleStats {
    /// `None` for an empty sample.
    pub fn from_ms(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        Some(Self {
            count: sorted.len(),
            mean_ms: mean,
            p50_ms: percentile(&sorted, 50.0),
            p99_ms: percentile(&sorted, 99.0),
            max_ms: sorted[sorted.len() - 1],
        })
    }

    pub fn from_ns(samples: &[u64]) -> Option<Self> {
        let ms: Vec<f64> = samples.iter().map(|&ns| ns as f64 / 1e6).collect();
        Self::from_ms(&ms)
    }
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone)]
pub struct PeriodicSpec {
    pub name: String,
    pub frequency: f64,
    /// SCHED_FIFO priority to request; failure is logged and ignored.
    pub rt_priority: Option<i32>,
    /// Busy-wait this long before each deadline instead of sleeping, to
    /// hide timer wake-up latency.
    pub spin: Duration,
}

/// Try to move the calling thread to SCHED_FIFO.
pub fn request_realtime(priority: i32) -> bool {
    #[cfg(target_os = "linux")]
    unsafe {
        let param = libc::sched_param {
            sched_priority: priority,
        };
        libc::pthread_setschedparam(libc::pthread_self(), libc::SCHED_FIFO, &param) == 0
    }
    #[cfg(not(target_os = "linux"))]
    {
        let _ = priority;
        false
    }
}

/// Run `body` on a dedicated thread at `spec.frequency` against absolute
/// deadlines until `cancel` is set. A cycle that overruns by more than one
/// period resynchronizes instead of bursting to catch up.
pub fn spawn_periodic<F>(
    spec: PeriodicSpec,
    cancel: Cancel,
    timing: Option<Arc<TimingLog>>,
    mut body: F,
) -> std::io::Result<JoinHandle<()>>
where
    F: FnMut(u64) + Send + 'static,
{
    let period = Duration::from_secs_f64(1.0 / spec.frequency);
    std::thread::Builder::new().name(spec.name.clone()).spawn(move || {
        if let Some(prio) = spec.rt_priority {
            if !request_realtime(prio) {
                tracing::debug!(executor = %spec.name, "SCHED_FIFO unavailable, running with default policy");
            }
        }
        let mut next = Instant::now();
        let mut cycle = 0u64;
        while !cancel.is_cancelled() {
            let now = Instant::now();
            if next > now + spec.spin {
                std::thread::sleep(next - now - spec.spin);
            }
            while Instant::now() < next {
                std::hint::spin_loop();
            }
            let start = Instant::now();
            if let Some(t) = &timing {
                t.record(start);
            }
            body(cycle);
            cycle += 1;
            next += period;
            if start > next + period {
                next = start + period;
            }
        }
    })
}
