//! Acceptance checks. Prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits nonzero if any fail.
//!
//! Numeric criteria run in-process against oracles written here; the timing
//! and end-to-end criteria drive the `carl` binary. The binary runs go last
//! and one at a time so nothing else competes with the servo thread.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use futures::{SinkExt, StreamExt};
use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio::time::Duration;
use tokio_tungstenite::tungstenite::Message;

use carl_bridge::{link_pair, AckPayload, Bridge, Envelope, EnvelopeType, RobotPorts};
use carl_cli::config::RobotPaths;
use carl_cli::report::RunReport;
use carl_cli::LoadedRobot;
use carl_core::command::{CommandKind, CommandPayload};
use carl_core::controller::{damped_pseudoinverse, max_abs, nullspace_projector, resolve, CompoundTask, ServoConfig, Task};
use carl_core::bus::TopicBus;
use carl_core::kinematics::{log_map, JointState, Pose, RobotDescription};
use carl_core::periodic::Cancel;
use carl_core::planner::{fit_natural_spline, plan_trapezoid, PlannerFlags};
use carl_server::{audit_journal, JournalEntry, Server, ServerConfig};

/// Servo period target and tolerances.
const SERVO_MEAN_MS: f64 = 1.0;
const SERVO_MEAN_TOL: f64 = 0.05;
const SERVO_P99_MAX_MS: f64 = 2.0;
const WAN_MEAN_SHIFT: f64 = 0.05;
const WAN_P99_SHIFT: f64 = 0.10;
const WAN_LATENCY_MS: &str = "480";
const WAN_JITTER_MS: &str = "100";
const RUN_SECONDS: &str = "10";
const SCENARIO_WALL_S: f64 = 120.0;
/// Linear algebra identities hold to this bound.
const IDENTITY_TOL: f64 = 1e-9;
const FD_TOL: f64 = 1e-6;
const KNOT_TOL: f64 = 1e-12;

type Check = Result<String, String>;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn robot() -> LoadedRobot {
    let r = root();
    LoadedRobot::load(&RobotPaths {
        description: r.join("robots/demo_humanoid.json"),
        controller: r.join("config/controller.json"),
        scene: r.join("config/scene.json"),
        behaviors: r.join("behaviors"),
    })
    .expect("demo robot loads")
}

fn random_config(desc: &RobotDescription, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(
        desc.joint_count(),
        desc.joints.iter().map(|j| rng.random_range(j.limits[0]..=j.limits[1])),
    )
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// Priority preservation

fn priority_preservation() -> Check {
    let robot = robot();
    let desc = &robot.desc;
    let cs = &robot.controller.constraints;
    let exact = ServoConfig { damping: 0.0, ..Default::default() };
    let independent = cs.coupling_matrix(desc).map_err(|e| e.to_string())?.independent;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let (mut worst_du, mut worst_jn, mut worst_idem) = (0.0f64, 0.0f64, 0.0f64);
    let mut accepted = 0;
    let mut skipped = 0;
    while accepted < 1000 {
        let q = random_config(desc, &mut rng);
        let mut goal = |frame: &str| {
            let p = desc.forward_kinematics(&q, frame).unwrap();
            let d = Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05));
            Pose::new(p.position + d, UnitQuaternion::from_scaled_axis(d) * p.orientation)
        };
        let posture = DVector::from_fn(independent.len(), |k, _| q[independent[k]] + 0.01 * (k as f64).sin());
        let tasks = vec![
            Task::position("rp", "right_palm", goal("right_palm"), 4.0, 1),
            Task::position("lp", "left_palm", goal("left_palm"), 4.0, 2),
            Task::orientation("ro", "right_palm", goal("right_palm"), 3.0, 3),
            Task::orientation("lo", "left_palm", goal("left_palm"), 3.0, 4),
            Task::posture("post", posture, 1.0, 5),
        ];
        let top = resolve(&CompoundTask::new(tasks[..1].to_vec()).unwrap(), cs, desc, &q, &exact).map_err(|e| e.to_string())?;
        let j1 = &top.jacobians[0];
        // Non-singular: smallest singular value of the top task well above zero.
        let sv = j1.clone().svd(false, false).singular_values;
        if top.truncated || sv.min() < 1e-3 {
            skipped += 1;
            continue;
        }
        for k in 2..=tasks.len() {
            let r = resolve(&CompoundTask::new(tasks[..k].to_vec()).unwrap(), cs, desc, &q, &exact)
                .map_err(|e| e.to_string())?;
            worst_du = worst_du.max((j1 * (&r.u - &top.u)).amax());
        }
        let n = nullspace_projector(j1, &damped_pseudoinverse(j1, 0.0).matrix);
        worst_jn = worst_jn.max(max_abs(&(j1 * &n)));
        worst_idem = worst_idem.max(max_abs(&(&n * &n - &n)));
        accepted += 1;
    }
    let detail = format!(
        "1000 configs ({skipped} singular skipped): max|dJ1u|={worst_du:.2e} max|J1N|={worst_jn:.2e} max|N^2-N|={worst_idem:.2e}"
    );
    ensure(worst_du <= IDENTITY_TOL && worst_jn <= IDENTITY_TOL && worst_idem <= IDENTITY_TOL, || detail.clone())?;
    Ok(detail)
}

// Trapezoid

/// Distance covered by a rest-to-rest profile, integrated with Simpson's
/// rule between the phase corners (exact for piecewise-linear velocity).
/// Corners come from the peak speed, worked out here from d, vmax, amax.
fn trapezoid_oracle(d: f64, vmax: f64, amax: f64, v: impl Fn(f64) -> f64) -> (f64, f64, f64) {
    let vp = vmax.min((d * amax).sqrt());
    let ramp = if amax > 0.0 { vp / amax } else { 0.0 };
    let cruise = if vp > 0.0 { (d - vp * ramp) / vp } else { 0.0 };
    let corners = [0.0, ramp, ramp + cruise, 2.0 * ramp + cruise];
    let dist = corners
        .windows(2)
        .map(|w| (w[1] - w[0]) / 6.0 * (v(w[0]) + 4.0 * v(0.5 * (w[0] + w[1])) + v(w[1])))
        .sum();
    (dist, vp, corners[3])
}

fn trapezoid() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut worst_dist = 0.0f64;
    for case in 0..1000 {
        let d = rng.random_range(0.0..5.0);
        let vmax = rng.random_range(0.01..3.0);
        let amax = rng.random_range(0.01..10.0);
        let p = plan_trapezoid(d, vmax, amax).map_err(|e| e.to_string())?;
        let (dist, vp, t_end) = trapezoid_oracle(d, vmax, amax, |t| p.sample(t).1);
        worst_dist = worst_dist.max((dist - d).abs());
        ensure((dist - d).abs() <= IDENTITY_TOL, || format!("case {case}: integrated {dist} vs {d}"))?;
        ensure((p.duration - t_end).abs() <= IDENTITY_TOL, || format!("case {case}: T {} vs {t_end}", p.duration))?;
        for k in 0..=1000 {
            let t = p.duration * k as f64 / 1000.0;
            let (_, v) = p.sample(t);
            let a = p.acceleration(t);
            ensure(v.abs() <= vp + 1e-12, || format!("case {case}: |v({t})|={v} above {vp}"))?;
            ensure(a.abs() <= amax + IDENTITY_TOL, || format!("case {case}: |a({t})|={a} above {amax}"))?;
        }
    }
    let t3 = plan_trapezoid(2.0, 1.0, 1.0).map_err(|e| e.to_string())?.duration;
    let tri = plan_trapezoid(0.5, 1.0, 1.0).map_err(|e| e.to_string())?.duration;
    let tri_want = 2.0 * 0.5f64.sqrt();
    ensure((t3 - 3.0).abs() <= IDENTITY_TOL, || format!("d=2: T={t3}, want 3"))?;
    ensure((tri - tri_want).abs() <= IDENTITY_TOL, || format!("d=0.5: T={tri}, want {tri_want}"))?;
    Ok(format!("1000 cases, max distance error {worst_dist:.2e}; T(2,1,1)={t3:.12} T(0.5,1,1)={tri:.12}"))
}

// Natural spline

/// Natural cubic spline value at `x` via the Thomas algorithm on the
/// interior second-derivative system.
fn thomas_spline(t: &[f64], y: &[f64], x: f64) -> f64 {
    let n = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let mut m = vec![0.0; n];
    if n > 2 {
        let k = n - 2;
        let (mut a, mut b, mut c, mut r) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
        for i in 0..k {
            a[i] = h[i];
            b[i] = 2.0 * (h[i] + h[i + 1]);
            c[i] = h[i + 1];
            r[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            r[i] -= w * r[i - 1];
        }
        m[k] = r[k - 1] / b[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = (r[i] - c[i] * m[i + 2]) / b[i];
        }
    }
    let i = t.windows(2).position(|w| x <= w[1]).unwrap_or(n - 2);
    let (l, r) = (t[i + 1] - x, x - t[i]);
    m[i] * l.powi(3) / (6.0 * h[i])
        + m[i + 1] * r.powi(3) / (6.0 * h[i])
        + (y[i] / h[i] - m[i] * h[i] / 6.0) * l
        + (y[i + 1] / h[i] - m[i + 1] * h[i] / 6.0) * r
}

fn spline() -> Check {
    let fixture = fit_natural_spline(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).map_err(|e| e.to_string())?;
    let s05 = fixture.value(0.5);
    let oracle05 = thomas_spline(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0], 0.5);
    ensure((oracle05 - 0.6875).abs() <= IDENTITY_TOL, || format!("oracle gives {oracle05}"))?;
    ensure((s05 - 0.6875).abs() <= IDENTITY_TOL, || format!("S(0.5)={s05}, want 0.6875"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let (mut worst_knot, mut worst_bc, mut worst_oracle) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(2..12);
        let mut t = vec![0.0];
        for _ in 1..n {
            t.push(t.last().unwrap() + rng.random_range(0.05..2.0));
        }
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = fit_natural_spline(&t, &y).map_err(|e| e.to_string())?;
        for (ti, yi) in t.iter().zip(&y) {
            worst_knot = worst_knot.max((s.value(*ti) - yi).abs());
        }
        worst_bc = worst_bc
            .max(s.second_derivative(t[0]).abs())
            .max(s.second_derivative_left(*t.last().unwrap()).abs());
        for k in 1..50 {
            let x = t[0] + (t[n - 1] - t[0]) * k as f64 / 50.0;
            worst_oracle = worst_oracle.max((s.value(x) - thomas_spline(&t, &y, x)).abs());
        }
    }
    let detail = format!(
        "S(0.5)={s05:.12}; 1000 splines: knot err {worst_knot:.2e}, end S'' {worst_bc:.2e}, vs oracle {worst_oracle:.2e}"
    );
    ensure(worst_knot <= KNOT_TOL && worst_bc <= IDENTITY_TOL && worst_oracle <= 1e-8, || detail.clone())?;
    Ok(detail)
}

// Jacobian

fn jacobian() -> Check {
    let robot = robot();
    let desc = &robot.desc;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let frames: Vec<String> = desc.frame_names().map(String::from).collect();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let q = random_config(desc, &mut rng);
        for frame in &frames {
            let jac: DMatrix<f64> = desc.jacobian(&q, frame).map_err(|e| e.to_string())?;
            for i in 0..q.len() {
                let (mut qp, mut qm) = (q.clone(), q.clone());
                qp[i] += h;
                qm[i] -= h;
                let pp = desc.forward_kinematics(&qp, frame).unwrap();
                let pm = desc.forward_kinematics(&qm, frame).unwrap();
                let lin = (pp.position - pm.position) / (2.0 * h);
                let ang = log_map(&(pp.orientation * pm.orientation.inverse())) / (2.0 * h);
                for r in 0..3 {
                    worst = worst.max((lin[r] - jac[(r, i)]).abs()).max((ang[r] - jac[(r + 3, i)]).abs());
                }
            }
        }
    }
    let detail = format!("100 configs x {} frames: max |J - FD| = {worst:.2e}", frames.len());
    ensure(worst <= FD_TOL, || detail.clone())?;
    Ok(detail)
}

// Throttle

fn throttle() -> Check {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .start_paused(true)
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(async {
        let robot = robot();
        let bus = TopicBus::new();
        let ports = RobotPorts::register(&bus, robot.desc.clone(), PlannerFlags::default()).map_err(|e| e.to_string())?;
        let home = robot.controller.home_posture(&robot.desc);
        let cancel = Cancel::new();
        // Publish instants, by sequence number, kept independently of the bus.
        let published: Arc<Mutex<Vec<(u64, tokio::time::Instant)>>> = Arc::default();
        {
            let topic = ports.joint_states.clone();
            let published = published.clone();
            let cancel = cancel.clone();
            tokio::spawn(async move {
                let mut k = 0u64;
                let mut tick = tokio::time::interval(Duration::from_millis(1));
                while !cancel.is_cancelled() {
                    tick.tick().await;
                    let seq = topic.publish(JointState::at_rest(k as f64 * 1e-3, home.clone()));
                    published.lock().push((seq, tokio::time::Instant::now()));
                    k += 1;
                }
            });
        }
        let bridge = Arc::new(Bridge::new(ports.clone(), robot.bridge_config(20.0).map_err(|e| e.to_string())?));
        let (robot_side, mut server_side) = link_pair();
        let session = {
            let (b, c) = (bridge.clone(), cancel.clone());
            tokio::spawn(async move { b.run_session(robot_side, &c).await })
        };
        let mut received = Vec::new();
        let deadline = tokio::time::Instant::now() + Duration::from_secs(10);
        loop {
            tokio::select! {
                frame = server_side.rx.recv() => {
                    let env = Envelope::parse(&frame.ok_or("link closed")?).map_err(|e| e.reason().to_string())?;
                    if env.kind == EnvelopeType::Telemetry {
                        received.push((env.seq, tokio::time::Instant::now()));
                    }
                }
                _ = tokio::time::sleep_until(deadline) => break,
            }
        }
        cancel.cancel();
        let _ = session.await;
        let published = published.lock();
        let mut stale = 0;
        for (seq, at) in &received {
            // Newest sample published strictly before the send instant.
            let newest_before = published.iter().filter(|(_, t)| t < at).map(|(s, _)| *s).max().unwrap_or(0);
            if *seq < newest_before {
                stale += 1;
            }
        }
        let detail = format!("{} envelopes in 10 s from {} samples, {stale} stale", received.len(), published.len());
        ensure((198..=202).contains(&received.len()) && stale == 0, || detail.clone())?;
        Ok(detail)
    })
}

// Lease stress

fn lease_stress() -> Check {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = ServerConfig {
            listen: "127.0.0.1:0".into(),
            log_path: dir.path().join("telemetry.ndjson"),
            static_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let server = Server::start(&cfg, json!({}), true).await.map_err(|e| e.to_string())?;
        let (mut robot_side, server_side) = link_pair();
        server.attach_bridge(server_side);
        let bridge_seen: Arc<Mutex<BTreeSet<u64>>> = Arc::default();
        {
            let seen = bridge_seen.clone();
            tokio::spawn(async move {
                while let Some(text) = robot_side.rx.recv().await {
                    let Ok(env) = Envelope::parse(&text) else { continue };
                    seen.lock().insert(env.seq);
                    let ack = serde_json::to_value(AckPayload::accepted(env.seq)).unwrap();
                    let _ = robot_side
                        .tx
                        .send(Envelope::new(EnvelopeType::Ack, "/operator_cmds", env.seq, 0.0, ack).to_text());
                }
            });
        }
        let url = format!("ws://{}/ws", server.http_addr);
        const CLIENTS: usize = 16;
        const EVENTS: usize = 10_000;
        let mut tasks = Vec::new();
        for c in 0..CLIENTS {
            let url = url.clone();
            tasks.push(tokio::spawn(async move {
                let mut rng = ChaCha8Rng::seed_from_u64(0x1ea5e ^ c as u64);
                let mut ws = None;
                let mut seq = 0u64;
                let mut done = 0usize;
                for _ in 0..EVENTS / CLIENTS {
                    match ws.take() {
                        None => {
                            let (stream, _) = tokio_tungstenite::connect_async(url.as_str()).await.map_err(|e| e.to_string())?;
                            let (sink, mut source) = stream.split();
                            let reader = tokio::spawn(async move { while let Some(Ok(_)) = source.next().await {} });
                            ws = Some((sink, reader));
                        }
                        Some((mut sink, reader)) => {
                            let roll: f64 = rng.random();
                            if roll < 0.15 {
                                let _ = sink.close().await;
                                let _ = reader.await;
                            } else {
                                seq += 1;
                                let text = if roll < 0.4 {
                                    let action = if rng.random_bool(0.6) { "request" } else { "release" };
                                    Envelope::new(EnvelopeType::Lease, "/lease", seq, 0.0, json!({ "action": action })).to_text()
                                } else {
                                    let payload = if roll < 0.7 {
                                        CommandPayload::power(rng.random_bool(0.5))
                                    } else {
                                        CommandPayload::new(CommandKind::Stop)
                                    };
                                    Envelope::command(seq, 0.0, &payload).to_text()
                                };
                                sink.send(Message::text(text)).await.map_err(|e| e.to_string())?;
                                ws = Some((sink, reader));
                            }
                        }
                    }
                    done += 1;
                }
                if let Some((mut sink, reader)) = ws {
                    let _ = sink.close().await;
                    let _ = reader.await;
                }
                Ok::<usize, String>(done)
            }));
        }
        let mut events = 0;
        for t in tasks {
            events += t.await.map_err(|e| e.to_string())??;
        }
        // Wait for disconnects and outstanding acks to settle.
        let mut snap = None;
        for _ in 0..100 {
            tokio::time::sleep(Duration::from_millis(50)).await;
            let s = server.hub.snapshot().await.ok_or("hub stopped")?;
            if s.sessions == 0 && s.pending == 0 {
                snap = Some(s);
                break;
            }
        }
        let snap = snap.ok_or("sessions never drained")?;

        // Replay the journal with a lease model kept independent of the server.
        let (mut holder, mut overlaps, mut foreign, mut bad_release, mut grants) = (None, 0, 0, 0, 0);
        let mut forwarded = BTreeSet::new();
        for e in &snap.journal {
            match e {
                JournalEntry::Granted { session, .. } => {
                    grants += 1;
                    if holder.is_some() {
                        overlaps += 1;
                    }
                    holder = Some(*session);
                }
                JournalEntry::Released { session, .. } => {
                    if holder != Some(*session) {
                        bad_release += 1;
                    }
                    holder = None;
                }
                JournalEntry::Forwarded { session, server_seq, .. } => {
                    if holder != Some(*session) {
                        foreign += 1;
                    }
                    forwarded.insert(*server_seq);
                }
            }
        }
        let audit = audit_journal(&snap.journal);
        let seen = bridge_seen.lock().clone();
        server.shutdown().await;
        let detail = format!(
            "{events} events from {CLIENTS} clients: {grants} grants, {} forwarded; two-operator instants {overlaps}, non-holder forwards {foreign}",
            forwarded.len()
        );
        ensure(events == EVENTS, || format!("only {events} events ran"))?;
        ensure(overlaps == 0 && foreign == 0 && bad_release == 0, || detail.clone())?;
        ensure(audit.overlapping_grants == 0 && audit.forwarded_from_non_holders == 0, || {
            format!("server audit disagrees: {audit:?}")
        })?;
        ensure(seen == forwarded, || {
            format!("bridge received {} commands, journal forwarded {}", seen.len(), forwarded.len())
        })?;
        ensure(grants > 1 && !forwarded.is_empty(), || format!("stress too weak: {detail}"))?;
        Ok(detail)
    })
}

// Binary-driven criteria

fn carl() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_carl"));
    cmd.env_remove("CARL_CONFIG").env("RUST_LOG", "warn");
    cmd
}

/// Default settings with repository robot files, ephemeral ports and
/// artifacts under `dir/out`.
fn write_config(dir: &Path) -> PathBuf {
    let r = root();
    let text = format!(
        "[robot]\ndescription = {:?}\ncontroller = {:?}\nscene = {:?}\nbehaviors = {:?}\n\n\
         [server]\nlisten = \"127.0.0.1:0\"\nbridge_listen = \"127.0.0.1:0\"\nstatic_dir = {:?}\n\n\
         [run]\nout_dir = \"out\"\nscenarios = {:?}\n",
        r.join("robots/demo_humanoid.json"),
        r.join("config/controller.json"),
        r.join("config/scene.json"),
        r.join("behaviors"),
        r.join("webui/static"),
        r.join("scenarios"),
    );
    let path = dir.join("carl.toml");
    std::fs::write(&path, text).unwrap();
    path
}

struct RunArtifacts {
    _dir: tempfile::TempDir,
    out: PathBuf,
    report: RunReport,
    periods: Vec<f64>,
    summary: String,
}

fn timed_run(wan: bool) -> Result<RunArtifacts, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_config(dir.path());
    let mut cmd = carl();
    cmd.arg("--config").arg(&cfg).args(["run", "--duration", RUN_SECONDS]);
    if wan {
        cmd.args(["--wan-latency", WAN_LATENCY_MS, "--wan-jitter", WAN_JITTER_MS, "--seed", "7"]);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("carl run exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    let out_dir = dir.path().join("out");
    let text = std::fs::read_to_string(out_dir.join("report.json")).map_err(|e| e.to_string())?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut reader = csv::Reader::from_path(out_dir.join("servo_timing.csv")).map_err(|e| e.to_string())?;
    let mut periods = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| e.to_string())?;
        periods.push(row[1].parse::<f64>().map_err(|e| e.to_string())?);
    }
    let rep = carl().arg("report").arg(&out_dir).output().map_err(|e| e.to_string())?;
    if !rep.status.success() {
        return Err(format!("carl report exited {:?}", rep.status.code()));
    }
    Ok(RunArtifacts {
        _dir: dir,
        out: out_dir,
        report,
        periods,
        summary: String::from_utf8_lossy(&rep.stdout).into_owned(),
    })
}

/// (mean, nearest-rank p99) of a sample.
fn mean_p99(samples: &[f64]) -> (f64, f64) {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    (mean, sorted[rank - 1])
}

/// The `mean=` and `p99=` fields of the servo line `carl report` printed.
fn reported_servo(summary: &str) -> Option<(f64, f64)> {
    let line = summary.lines().find(|l| l.starts_with("servo period"))?;
    let field = |key: &str| -> Option<f64> { line.split(key).nth(1)?.split_whitespace().next()?.parse().ok() };
    Some((field("mean=")?, field("p99=")?))
}

fn servo_rate(base: &Result<RunArtifacts, String>) -> Check {
    let run = base.as_ref().map_err(Clone::clone)?;
    ensure(run.periods.len() >= 9000, || format!("only {} servo periods recorded", run.periods.len()))?;
    let (mean, p99) = mean_p99(&run.periods);
    let (rep_mean, rep_p99) = reported_servo(&run.summary).ok_or("carl report printed no servo line")?;
    ensure((rep_mean - mean).abs() < 1e-3 && (rep_p99 - p99).abs() < 1e-3, || {
        format!("carl report says mean {rep_mean} p99 {rep_p99}, raw timing gives {mean:.4} {p99:.4}")
    })?;
    let detail = format!("{} periods: mean {mean:.4} ms, p99 {p99:.4} ms", run.periods.len());
    ensure((mean - SERVO_MEAN_MS).abs() <= SERVO_MEAN_TOL * SERVO_MEAN_MS && p99 <= SERVO_P99_MAX_MS, || detail.clone())?;
    Ok(detail)
}

fn wan_isolation(base: &Result<RunArtifacts, String>, wan: &Result<RunArtifacts, String>) -> Check {
    let base = base.as_ref().map_err(|e| format!("baseline: {e}"))?;
    let wan = wan.as_ref().map_err(|e| format!("wan run: {e}"))?;
    ensure(wan.report.wan.is_some(), || "wan run report has no link settings".into())?;
    let (bm, bp) = mean_p99(&base.periods);
    let (wm, wp) = mean_p99(&wan.periods);
    let (dm, dp) = ((wm - bm).abs() / bm, (wp - bp).abs() / bp);
    let detail = format!(
        "{WAN_LATENCY_MS}+{WAN_JITTER_MS} ms: mean {bm:.4} -> {wm:.4} ms ({:.2}%), p99 {bp:.4} -> {wp:.4} ms ({:.2}%)",
        dm * 100.0,
        dp * 100.0
    );
    ensure(dm < WAN_MEAN_SHIFT && dp < WAN_P99_SHIFT, || detail.clone())?;
    Ok(detail)
}

fn log_integrity(runs: &[(&str, &Result<RunArtifacts, String>)]) -> Check {
    let mut parts = Vec::new();
    for (label, run) in runs {
        let run = run.as_ref().map_err(|e| format!("{label}: {e}"))?;
        let text = std::fs::read_to_string(run.out.join("telemetry.ndjson")).map_err(|e| e.to_string())?;
        let mut last_ts = 0u64;
        let mut count = 0u64;
        for (n, line) in text.lines().enumerate() {
            let rec: Value = serde_json::from_str(line).map_err(|e| format!("{label} line {}: {e}", n + 1))?;
            let ts = rec["ts"].as_u64().ok_or_else(|| format!("{label} line {}: no ts", n + 1))?;
            ensure(ts >= last_ts, || format!("{label} line {}: ts {ts} after {last_ts}", n + 1))?;
            last_ts = ts;
            count += 1;
        }
        let sent = run.report.bridge.telemetry_sent;
        ensure(count == sent && count > 0, || format!("{label}: {count} lines logged, bridge sent {sent}"))?;
        parts.push(format!("{label} {count}/{sent}"));
    }
    Ok(format!("logged/sent: {}", parts.join(", ")))
}

fn bottle_pick(wan: bool) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_config(dir.path());
    let mut cmd = carl();
    cmd.arg("--config").arg(&cfg).args(["scenario", "bottle_pick"]);
    if wan {
        cmd.args(["--wan-latency", WAN_LATENCY_MS, "--wan-jitter", WAN_JITTER_MS, "--seed", "7"]);
    }
    let start = Instant::now();
    let out = cmd.output().map_err(|e| e.to_string())?;
    let wall = start.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let verdict = stdout.lines().find(|l| l.starts_with("scenario bottle_pick")).unwrap_or("no verdict line").to_string();
    let detail = format!("{verdict} in {wall:.1} s wall");
    ensure(out.status.success() && verdict.contains("PASS") && wall <= SCENARIO_WALL_S, || {
        format!("{detail}; exit {:?}\n{stdout}", out.status.code())
    })?;
    Ok(detail)
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn check(&mut self, name: &str, f: impl FnOnce() -> Check) {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
}

fn main() {
    let mut suite = Suite { failed: 0 };
    suite.check("priority preservation", priority_preservation);
    suite.check("trapezoid profile", trapezoid);
    suite.check("natural spline", spline);
    suite.check("jacobian finite differences", jacobian);
    suite.check("telemetry throttle", throttle);
    suite.check("lease exclusivity stress", lease_stress);

    let base = timed_run(false);
    let wan = timed_run(true);
    suite.check("servo rate", || servo_rate(&base));
    suite.check("wan isolation", || wan_isolation(&base, &wan));
    suite.check("log integrity", || log_integrity(&[("baseline", &base), ("wan", &wan)]));
    suite.check("bottle_pick at 0 ms", || bottle_pick(false));
    suite.check("bottle_pick at 480 ms", || bottle_pick(true));

    if suite.failed > 0 {
        println!("{} acceptance criteria failed", suite.failed);
        std::process::exit(1);
    }
}
