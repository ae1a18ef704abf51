//! Run artifacts and the `carl report` summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use carl_bridge::{StatsSnapshot, WanLinkConfig};
use carl_core::periodic::CycleStats;
use carl_server::LogRecord;

use crate::error::CliError;
use crate::scenario::ScenarioOutcome;

pub const TELEMETRY_LOG: &str = "telemetry.ndjson";
pub const SERVO_TIMING: &str = "servo_timing.csv";
pub const RTT: &str = "rtt.csv";
pub const REPORT: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySummary {
    pub sent: u64,
    pub logged: u64,
    /// Mean logged rate over the logged span, Hz.
    pub rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub duration_s: f64,
    pub servo_target_ms: f64,
    pub servo: Option<CycleStats>,
    pub rtt: Option<CycleStats>,
    pub telemetry: TelemetrySummary,
    pub bridge: StatsSnapshot,
    pub wan: Option<WanLinkConfig>,
    pub scenario: Option<ScenarioOutcome>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path.display(), e)
}

pub fn write_servo_timing(dir: &Path, periods_ns: &[u64]) -> Result<(), CliError> {
    let path = dir.join(SERVO_TIMING);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
    w.write_record(["cycle", "period_ms"]).map_err(|e| CliError::Runtime(e.to_string()))?;
    for (i, ns) in periods_ns.iter().enumerate() {
        w.write_record([i.to_string(), format!("{:.6}", *ns as f64 / 1e6)])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(io_err(&path))
}

pub fn write_rtt(dir: &Path, rtt_ms: &[f64]) -> Result<(), CliError> {
    let path = dir.join(RTT);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
    w.write_record(["command", "rtt_ms"]).map_err(|e| CliError::Runtime(e.to_string()))?;
    for (i, ms) in rtt_ms.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{ms:.3}")])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(io_err(&path))
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<(), CliError> {
    let path = dir.join(REPORT);
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    std::fs::write(&path, text).map_err(io_err(&path))
}

/// Second column of a two-column CSV artifact.
pub fn read_column(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let v = rec
            .get(1)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| CliError::Runtime(format!("{}: bad row {:?}", path.display(), rec)))?;
        out.push(v);
    }
    Ok(out)
}

/// Result of reading a telemetry log line by line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogScan {
    pub records: u64,
    pub bad_lines: Vec<usize>,
    /// Line numbers whose timestamp is earlier than the line before.
    pub regressions: Vec<usize>,
    pub first_ts: Option<u64>,
    pub last_ts: Option<u64>,
    pub per_topic: BTreeMap<String, u64>,
}

impl LogScan {
    pub fn rate_hz(&self) -> Option<f64> {
        self.rate_of(self.records)
    }

    /// Mean rate of `count` records over the logged span.
    pub fn rate_of(&self, count: u64) -> Option<f64> {
        match (self.first_ts, self.last_ts) {
            (Some(a), Some(b)) if b > a && count > 1 => Some((count - 1) as f64 / ((b - a) as f64 / 1000.0)),
            _ => None,
        }
    }
}

pub fn scan_log(path: &Path) -> Result<LogScan, CliError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut scan = LogScan::default();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogRecord>(&line) {
            Ok(rec) => {
                if scan.last_ts.is_some_and(|prev| rec.ts < prev) {
                    scan.regressions.push(i + 1);
                }
                scan.first_ts.get_or_insert(rec.ts);
                scan.last_ts = Some(rec.ts);
                scan.records += 1;
                *scan.per_topic.entry(rec.topic).or_default() += 1;
            }
            Err(_) => scan.bad_lines.push(i + 1),
        }
    }
    Ok(scan)
}

/// Text histogram of `samples` over `bins` equal-width bins.
pub fn histogram(samples: &[f64], bins: usize) -> String {
    let mut out = String::new();
    if samples.is_empty() || bins == 0 {
        return out;
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let k = (((s - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let peak = counts.iter().copied().max().unwrap_or(1).max(1);
    for (k, c) in counts.iter().enumerate() {
        let bar = "#".repeat((c * 50).div_ceil(peak));
        let _ = writeln!(out, "  {:>9.4} ms | {:>8} {}", lo + k as f64 * width, c, bar);
    }
    out
}

fn stats_line(label: &str, s: &CycleStats) -> String {
    format!(
        "{label}: n={} mean={:.4} ms p50={:.4} ms p99={:.4} ms max={:.4} ms",
        s.count, s.mean_ms, s.p50_ms, s.p99_ms, s.max_ms
    )
}

/// Summarize the artifacts in `dir` as text.
pub fn summarize(dir: &Path) -> Result<String, CliError> {
    let required = [TELEMETRY_LOG, SERVO_TIMING];
    let missing: Vec<PathBuf> = required.iter().map(|f| dir.join(f)).filter(|p| !p.exists()).collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts(missing));
    }
    let periods = read_column(&dir.join(SERVO_TIMING))?;
    let scan = scan_log(&dir.join(TELEMETRY_LOG))?;
    if periods.is_empty() || scan.records == 0 {
        return Err(CliError::NoData(format!("{} holds no samples", dir.display())));
    }
    let mut out = String::new();
    let servo = CycleStats::from_ms(&periods).expect("non-empty");
    let _ = writeln!(out, "{}", stats_line("servo period", &servo));
    out.push_str(&histogram(&periods, 12));
    let rtt_path = dir.join(RTT);
    if rtt_path.exists() {
        if let Some(rtt) = CycleStats::from_ms(&read_column(&rtt_path)?) {
            let _ = writeln!(out, "{}", stats_line("command round trip", &rtt));
        }
    }
    let _ = writeln!(
        out,
        "telemetry: {} records, {} unparsable lines, {} timestamp regressions, rate {}",
        scan.records,
        scan.bad_lines.len(),
        scan.regressions.len(),
        scan.rate_hz().map(|r| format!("{r:.2} Hz")).unwrap_or_else(|| "n/a".into())
    );
    for (topic, n) in &scan.per_topic {
        let rate = scan.rate_of(*n).map(|r| format!("{r:.2} Hz")).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(out, "  {topic}: {n} records, {rate}");
    }
    let report_path = dir.join(REPORT);
    if let Ok(text) = std::fs::read_to_string(&report_path) {
        if let Ok(rep) = serde_json::from_str::<RunReport>(&text) {
            if let Some(s) = rep.scenario {
                let verdict = if s.passed { "passed" } else { "FAILED" };
                let _ = writeln!(out, "scenario {}: {verdict} in {:.1} s", s.name, s.elapsed_s);
                for c in &s.checks {
                    let _ = writeln!(out, "  [{}] {}", if c.passed { "ok" } else { "x" }, c.detail);
                }
                if let Some(e) = s.error {
                    let _ = writeln!(out, "  error: {e}");
                }
            }
        }
    }
    Ok(out)
}
