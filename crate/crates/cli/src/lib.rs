//! The `carl` launcher: in-process and split deployments, headless scenarios
//! and run reports.

pub mod client;
pub mod config;
pub mod error;
pub mod report;
pub mod scenario;
pub mod stack;

use std::path::Path;
use std::time::Duration;

use carl_bridge::Bridge;
use carl_core::periodic::{Cancel, CycleStats};
use carl_server::Server;

pub use config::CarlConfig;
pub use error::CliError;
use report::{RunReport, TelemetrySummary};
use scenario::{run_scenario, Scenario, ScenarioOutcome};
pub use stack::{FullStack, LoadedRobot, RobotStack};

/// Remove artifacts of an earlier run so that counts refer to this one.
pub fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    for f in [report::TELEMETRY_LOG, report::SERVO_TIMING, report::RTT, report::REPORT] {
        let p = dir.join(f);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| CliError::io(p.display(), e))?;
        }
    }
    Ok(())
}

/// Run the full stack in one process until `stop` resolves, then write the
/// run artifacts. With a scenario, the scripted operator drives the robot
/// and `stop` is ignored.
pub async fn run_in_process(
    mut cfg: CarlConfig,
    scenario: Option<Scenario>,
    stop: impl std::future::Future<Output = ()>,
) -> Result<RunReport, CliError> {
    let mut robot = LoadedRobot::load(&cfg.robot)?;
    if let Some(objects) = scenario.as_ref().and_then(|s| s.objects.clone()) {
        robot.scene.objects = objects;
    }
    let out = cfg.run.out_dir.clone();
    prepare_out_dir(&out)?;
    cfg.server.log_path = out.join(report::TELEMETRY_LOG);
    let stack = FullStack::start(&cfg, &robot, false).await?;
    let url = format!("ws://{}/ws", stack.server.http_addr);
    println!("panel: http://{}/", stack.server.http_addr);
    let started = std::time::Instant::now();
    let work = async {
        match &scenario {
            Some(s) => Some(run_scenario(s, &url, &robot.controller).await),
            None => {
                stop.await;
                None
            }
        }
    };
    let outcome: Option<ScenarioOutcome> = tokio::select! {
        o = work => o,
        name = watch(&stack) => {
            stack.stop().await;
            return Err(CliError::Runtime(format!("{name} stopped unexpectedly")));
        }
    };
    let duration_s = started.elapsed().as_secs_f64();
    let log = stack.server.log().clone();
    let bridge_stats = stack.bridge_stats.clone();
    let servo_timing = stack.robot.servo_timing.clone();
    let wan = stack.wan;
    let panicked = stack.stop().await;
    if let Some(name) = panicked.first() {
        return Err(CliError::Runtime(format!("{name} executor panicked")));
    }

    let periods = servo_timing.periods_ns();
    let rtt_ms = outcome.as_ref().map(|o| o.rtt_ms.clone()).unwrap_or_default();
    report::write_servo_timing(&out, &periods)?;
    report::write_rtt(&out, &rtt_ms)?;
    let scan = report::scan_log(log.path())?;
    let bridge = bridge_stats.snapshot();
    let rep = RunReport {
        duration_s,
        servo_target_ms: 1000.0 / robot.controller.servo.frequency,
        servo: CycleStats::from_ns(&periods),
        rtt: CycleStats::from_ms(&rtt_ms),
        telemetry: TelemetrySummary {
            sent: bridge.telemetry_sent,
            logged: scan.records,
            rate_hz: scan.rate_hz(),
        },
        bridge,
        wan,
        scenario: outcome,
    };
    report::write_report(&out, &rep)?;
    Ok(rep)
}

/// Resolves with the name of the first component that stops on its own.
async fn watch(stack: &FullStack) -> &'static str {
    loop {
        if let Some(name) = stack.exited() {
            return name;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
}

/// Robot side alone: plant, servo and planner with no network. Writes the
/// servo timing artifact on exit.
pub async fn sim(cfg: CarlConfig, stop: impl std::future::Future<Output = ()>) -> Result<Option<CycleStats>, CliError> {
    let loaded = LoadedRobot::load(&cfg.robot)?;
    std::fs::create_dir_all(&cfg.run.out_dir).map_err(|e| CliError::io(cfg.run.out_dir.display(), e))?;
    let stack = RobotStack::start(&loaded, &cfg.realtime)?;
    let crashed = tokio::select! {
        _ = stop => None,
        name = async {
            loop {
                if let Some(n) = stack.exited() {
                    return n;
                }
                tokio::time::sleep(Duration::from_millis(100)).await;
            }
        } => Some(name),
    };
    let timing = stack.servo_timing.clone();
    let panicked = tokio::task::spawn_blocking(move || stack.stop()).await.unwrap_or_default();
    let periods = timing.periods_ns();
    report::write_servo_timing(&cfg.run.out_dir, &periods)?;
    if let Some(name) = crashed.or(panicked.first().copied()) {
        return Err(CliError::Runtime(format!("{name} stopped unexpectedly")));
    }
    Ok(CycleStats::from_ns(&periods))
}

/// Server half of a split deployment: portal plus a TCP listener for the
/// bridge.
pub async fn serve(mut cfg: CarlConfig, stop: impl std::future::Future<Output = ()>) -> Result<(), CliError> {
    let robot = LoadedRobot::load(&cfg.robot)?;
    std::fs::create_dir_all(&cfg.run.out_dir).map_err(|e| CliError::io(cfg.run.out_dir.display(), e))?;
    if cfg.server.log_path == CarlConfig::default().server.log_path {
        cfg.server.log_path = cfg.run.out_dir.join(report::TELEMETRY_LOG);
    }
    let mut server = Server::start(&cfg.server, robot.document(), false).await?;
    let wan = (!cfg.wan.is_identity()).then_some(cfg.wan);
    let bridge_listen = cfg.server.bridge_listen.clone();
    let bound = server.listen_for_bridges(&bridge_listen, wan).await?;
    println!("panel: http://{}/  bridge: {bound}", server.http_addr);
    stop.await;
    server.shutdown().await;
    Ok(())
}

/// Robot half of a split deployment: plant, servo, planner and a bridge that
/// dials the server. The bridge hosts the simulated robot because the topic
/// bus lives inside one process.
pub async fn bridge(cfg: CarlConfig, stop: impl std::future::Future<Output = ()>) -> Result<(), CliError> {
    let loaded = LoadedRobot::load(&cfg.robot)?;
    std::fs::create_dir_all(&cfg.run.out_dir).map_err(|e| CliError::io(cfg.run.out_dir.display(), e))?;
    let stack = RobotStack::start(&loaded, &cfg.realtime)?;
    let bridge = Bridge::new(stack.ports.clone(), loaded.bridge_config(cfg.bridge.telemetry_rate)?);
    let cancel = Cancel::new();
    let c = cancel.clone();
    let addr = cfg.bridge.server_addr.clone();
    let task = tokio::spawn(async move { bridge.run_tcp_client(&addr, None, c).await });
    stop.await;
    cancel.cancel();
    let _ = tokio::time::timeout(Duration::from_secs(2), task).await;
    let timing = stack.servo_timing.clone();
    tokio::task::spawn_blocking(move || stack.stop()).await.ok();
    report::write_servo_timing(&cfg.run.out_dir, &timing.periods_ns())
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
