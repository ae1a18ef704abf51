//! Append-only telemetry log, one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{mpsc, oneshot};

use crate::ServerError;

pub const DEFAULT_QUERY_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Wall-clock milliseconds since the Unix epoch, assigned at append.
    pub ts: u64,
    pub topic: String,
    /// Envelope sequence number of the frame.
    pub seq: u64,
    pub frame: Value,
}

pub fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

enum LogMsg {
    Append { topic: String, seq: u64, frame: Value },
    Sync(oneshot::Sender<()>),
    Close,
}

/// Handle to the log writer thread. Appends never block the caller.
pub struct TelemetryLog {
    path: PathBuf,
    tx: mpsc::UnboundedSender<LogMsg>,
    appended: Arc<AtomicU64>,
    writer: Mutex<Option<JoinHandle<()>>>,
}

impl TelemetryLog {
    /// Open `path` for appending, creating parent directories.
    pub fn open(path: &Path) -> Result<Self, ServerError> {
        let io_err = |source| ServerError::Log {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        let last_ts = last_timestamp(path).unwrap_or(0);
        let (tx, rx) = mpsc::unbounded_channel();
        let appended = Arc::new(AtomicU64::new(0));
        let count = appended.clone();
        let writer = std::thread::Builder::new()
            .name("telemetry-log".into())
            .spawn(move || write_loop(file, rx, count, last_ts))
            .map_err(io_err)?;
        Ok(Self {
            path: path.to_path_buf(),
            tx,
            appended,
            writer: Mutex::new(Some(writer)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, topic: &str, seq: u64, frame: Value) {
        let _ = self.tx.send(LogMsg::Append {
            topic: topic.to_string(),
            seq,
            frame,
        });
    }

    /// Records written to the file so far.
    pub fn appended(&self) -> u64 {
        self.appended.load(Ordering::Acquire)
    }

    /// Wait until everything appended before this call is on disk.
    pub async fn sync(&self) {
        let (done, wait) = oneshot::channel();
        if self.tx.send(LogMsg::Sync(done)).is_ok() {
            let _ = wait.await;
        }
    }

    /// Flush and stop the writer. Later appends are discarded.
    pub fn close(&self) {
        if let Some(handle) = self.writer.lock().take() {
            let _ = self.tx.send(LogMsg::Close);
            let _ = handle.join();
        }
    }
}

fn write_loop(file: File, mut rx: mpsc::UnboundedReceiver<LogMsg>, count: Arc<AtomicU64>, mut last_ts: u64) {
    let mut out = BufWriter::new(file);
    while let Some(msg) = rx.blocking_recv() {
        let mut batch = vec![msg];
        while let Ok(more) = rx.try_recv() {
            batch.push(more);
        }
        let mut stop = false;
        for msg in batch {
            match msg {
                LogMsg::Append { topic, seq, frame } => {
                    last_ts = last_ts.max(unix_ms());
                    let rec = LogRecord {
                        ts: last_ts,
                        topic,
                        seq,
                        frame,
                    };
                    let line = serde_json::to_string(&rec).expect("log records serialize");
                    if let Err(e) = writeln!(out, "{line}") {
                        tracing::error!(error = %e, "telemetry log write failed");
                        continue;
                    }
                    count.fetch_add(1, Ordering::AcqRel);
                }
                LogMsg::Sync(done) => {
                    if let Err(e) = out.flush() {
                        tracing::error!(error = %e, "telemetry log flush failed");
                    }
                    let _ = done.send(());
                }
                LogMsg::Close => stop = true,
            }
        }
        if let Err(e) = out.flush() {
            tracing::error!(error = %e, "telemetry log flush failed");
        }
        if stop {
            break;
        }
    }
    let _ = out.flush();
}

fn last_timestamp(path: &Path) -> Option<u64> {
    let file = File::open(path).ok()?;
    BufReader::new(file)
        .lines()
        .map_while(Result::ok)
        .filter_map(|l| serde_json::from_str::<LogRecord>(&l).ok())
        .map(|r| r.ts)
        .last()
}

/// Records with `ts >= since`, oldest first, at most `limit`.
pub fn query_log(path: &Path, since: u64, limit: usize) -> Result<Vec<LogRecord>, ServerError> {
    let err = |source| ServerError::Log {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(err)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        if out.len() >= limit {
            break;
        }
        let line = line.map_err(err)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(&line)
            .map_err(|e| err(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
        if rec.ts >= since {
            out.push(rec);
        }
    }
    Ok(out)
}
