use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use carl_cli::scenario::Scenario;
use carl_cli::{report, CarlConfig, CliError};

#[derive(Parser, Debug)]
#[command(name = "carl", version, about = "Web teleoperation stack for a simulated humanoid")]
struct Cli {
    /// Configuration file; defaults to ./carl.toml when present.
    #[arg(long, short, global = true, env = "CARL_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct Overrides {
    /// One-way WAN latency, ms.
    #[arg(long, env = "CARL_WAN_LATENCY_MS")]
    wan_latency: Option<f64>,
    /// Upper bound of the uniform extra WAN delay, ms.
    #[arg(long, env = "CARL_WAN_JITTER_MS")]
    wan_jitter: Option<f64>,
    /// WAN drop probability in [0, 1).
    #[arg(long, env = "CARL_WAN_DROP")]
    wan_drop: Option<f64>,
    #[arg(long, env = "CARL_SEED")]
    seed: Option<u64>,
    /// Address the bridge dials in split deployments.
    #[arg(long, env = "CARL_SERVER_ADDR")]
    server_addr: Option<String>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Start the whole stack and serve the operator panel.
    Run {
        /// Run the server and the robot side as two processes linked over TCP.
        #[arg(long)]
        split: bool,
        /// Stop after this many seconds instead of waiting for a signal.
        #[arg(long)]
        duration: Option<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a scripted operator session headless and check the outcome.
    Scenario {
        /// Scenario name under the scenarios directory, or a path.
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Summarize the artifacts of a finished run.
    Report {
        /// Run directory or telemetry log inside one; defaults to the
        /// configured output directory.
        path: Option<PathBuf>,
    },
    /// Server half of a split deployment.
    Serve {
        #[arg(long)]
        duration: Option<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simulated plant, controller and planner alone, without networking.
    Sim {
        #[arg(long)]
        duration: Option<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Robot half of a split deployment: simulated plant, controller,
    /// planner and the bridge dialing the server.
    Bridge {
        #[arg(long)]
        duration: Option<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn apply(cfg: &mut CarlConfig, o: &Overrides) -> Result<(), CliError> {
    if let Some(v) = o.wan_latency {
        cfg.wan.latency_ms = v;
    }
    if let Some(v) = o.wan_jitter {
        cfg.wan.jitter_ms = v;
    }
    if let Some(v) = o.wan_drop {
        cfg.wan.drop = v;
    }
    if let Some(v) = o.seed {
        cfg.wan.seed = v;
    }
    if let Some(v) = &o.server_addr {
        cfg.bridge.server_addr = v.clone();
    }
    if let Some(v) = &o.out {
        cfg.run.out_dir = v.clone();
    }
    cfg.wan.validate().map_err(|e| CliError::config("command line", e))
}

async fn stop_after(duration: Option<f64>) {
    match duration {
        Some(s) => {
            tokio::select! {
                _ = tokio::time::sleep(Duration::from_secs_f64(s.max(0.0))) => {}
                _ = carl_cli::shutdown_signal() => {}
            }
        }
        None => carl_cli::shutdown_signal().await,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(execute(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

async fn execute(cli: Cli) -> Result<u8, CliError> {
    let mut cfg = CarlConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Run {
            split,
            duration,
            overrides,
        } => {
            apply(&mut cfg, &overrides)?;
            if split {
                carl_cli::prepare_out_dir(&cfg.run.out_dir)?;
                return run_split(cli.config, duration, overrides).await;
            }
            let rep = carl_cli::run_in_process(cfg.clone(), None, stop_after(duration)).await?;
            print!("{}", report::summarize(&cfg.run.out_dir).unwrap_or_default());
            println!("telemetry sent {} logged {}", rep.telemetry.sent, rep.telemetry.logged);
            Ok(0)
        }
        Command::Scenario { name, overrides } => {
            apply(&mut cfg, &overrides)?;
            let (scenario, origin) = Scenario::find(&name, &cfg.run.scenarios)?;
            scenario.check_against(&carl_cli::LoadedRobot::load(&cfg.robot)?, &origin)?;
            // A headless run never needs a fixed portal port.
            cfg.server.listen = "127.0.0.1:0".into();
            let rep = carl_cli::run_in_process(cfg.clone(), Some(scenario), std::future::pending()).await?;
            let outcome = rep.scenario.expect("scenario outcome");
            let verdict = if outcome.passed { "PASS" } else { "FAIL" };
            println!("scenario {}: {verdict} in {:.1} s", outcome.name, outcome.elapsed_s);
            for c in &outcome.checks {
                println!("  [{}] {}", if c.passed { "ok" } else { "x" }, c.detail);
            }
            if let Some(e) = &outcome.error {
                println!("  error: {e}");
            }
            println!("artifacts in {}", cfg.run.out_dir.display());
            Ok(if outcome.passed { 0 } else { 1 })
        }
        Command::Report { path } => {
            let dir = match path {
                Some(p) if p.is_file() => p.parent().map(PathBuf::from).unwrap_or_default(),
                Some(p) => p,
                None => cfg.run.out_dir,
            };
            print!("{}", report::summarize(&dir)?);
            Ok(0)
        }
        Command::Serve { duration, overrides } => {
            apply(&mut cfg, &overrides)?;
            carl_cli::serve(cfg, stop_after(duration)).await?;
            Ok(0)
        }
        Command::Sim { duration, overrides } => {
            apply(&mut cfg, &overrides)?;
            if let Some(s) = carl_cli::sim(cfg, stop_after(duration)).await? {
                println!(
                    "servo period: n={} mean={:.4} ms p99={:.4} ms max={:.4} ms",
                    s.count, s.mean_ms, s.p99_ms, s.max_ms
                );
            }
            Ok(0)
        }
        Command::Bridge { duration, overrides } => {
            apply(&mut cfg, &overrides)?;
            carl_cli::bridge(cfg, stop_after(duration)).await?;
            Ok(0)
        }
    }
}

/// Spawn `serve` and `bridge` as child processes and stop both together.
async fn run_split(config: Option<PathBuf>, duration: Option<f64>, o: Overrides) -> Result<u8, CliError> {
    let exe = std::env::current_exe().map_err(|e| CliError::io("locating the carl binary", e))?;
    let spawn = |sub: &str| {
        let mut cmd = tokio::process::Command::new(&exe);
        cmd.arg(sub);
        if let Some(c) = &config {
            cmd.arg("--config").arg(c);
        }
        for (flag, value) in [
            ("--wan-latency", o.wan_latency.map(|v| v.to_string())),
            ("--wan-jitter", o.wan_jitter.map(|v| v.to_string())),
            ("--wan-drop", o.wan_drop.map(|v| v.to_string())),
            ("--seed", o.seed.map(|v| v.to_string())),
            ("--server-addr", o.server_addr.clone()),
            ("--out", o.out.as_ref().map(|p| p.display().to_string())),
        ] {
            if let Some(v) = value {
                cmd.arg(flag).arg(v);
            }
        }
        cmd.kill_on_drop(true);
        cmd.spawn().map_err(|e| CliError::io(format!("starting carl {sub}"), e))
    };
    let mut server = spawn("serve")?;
    // Give the listener a moment; the bridge retries with backoff anyway.
    tokio::time::sleep(Duration::from_millis(300)).await;
    let mut robot = spawn("bridge")?;
    tokio::select! {
        _ = stop_after(duration) => {}
        s = server.wait() => tracing::warn!(status = ?s, "server process exited"),
        s = robot.wait() => tracing::warn!(status = ?s, "bridge process exited"),
    }
    let mut worst = 0u8;
    for (name, child) in [("bridge", &mut robot), ("serve", &mut server)] {
        if let Some(pid) = child.id() {
            // SAFETY: plain kill(2) on a child we spawned.
            unsafe {
                libc::kill(pid as libc::pid_t, libc::SIGTERM);
            }
        }
        match tokio::time::timeout(Duration::from_secs(10), child.wait()).await {
            Ok(Ok(status)) => {
                let code = status.code().unwrap_or(1) as u8;
                if code != 0 {
                    tracing::warn!(process = name, code, "child exited with failure");
                }
                worst = worst.max(code);
            }
            _ => {
                let _ = child.kill().await;
                worst = worst.max(1);
            }
        }
    }
    Ok(worst)
}
