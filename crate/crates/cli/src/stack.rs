//! Process wiring: the robot side (plant, servo, planner), the bridge and the
//! server, started together or separately.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

use carl_bridge::{link_pair, wan_link_pair, Bridge, BridgeConfig, BridgeStats, RobotPorts, ThrottlePolicy, WanLinkConfig};
use carl_core::bus::TopicBus;
use carl_core::cell::LatestCell;
use carl_core::config::ControllerConfig;
use carl_core::controller::{run_servo, Servo, ServoIo};
use carl_core::kinematics::{load_description, RobotDescription};
use carl_core::periodic::{Cancel, TimingLog};
use carl_core::planner::{load_behaviors, run_planner, BehaviorScript, Planner, PlannerFlags, PlannerIo};
use carl_core::sim::{run_plant, PlantIo, PlantState, SceneConfig, SharedMemoryHal};
use carl_server::Server;

use crate::config::{CarlConfig, RealtimeSection, RobotPaths};
use crate::error::CliError;

/// Servo periods kept for the timing report: a little over three minutes at
/// 1 kHz.
pub const SERVO_TIMING_CAP: usize = 200_000;

/// Plant integration rate, Hz.
pub const PLANT_RATE: f64 = 1000.0;

/// Controller status is published every this many servo cycles.
pub const STATUS_EVERY: u64 = 10;

/// Everything read from disk to describe one robot.
#[derive(Debug, Clone)]
pub struct LoadedRobot {
    pub desc: Arc<RobotDescription>,
    pub controller: ControllerConfig,
    pub scene: SceneConfig,
    pub behaviors: HashMap<String, BehaviorScript>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(path, e))
}

impl LoadedRobot {
    pub fn load(paths: &RobotPaths) -> Result<Self, CliError> {
        let desc = load_description(&read(&paths.description)?).map_err(|e| CliError::config(&paths.description, e))?;
        let controller =
            ControllerConfig::parse(&read(&paths.controller)?).map_err(|e| CliError::config(&paths.controller, e))?;
        controller
            .validate(&desc)
            .map_err(|e| CliError::config(&paths.controller, e))?;
        let scene = SceneConfig::parse(&read(&paths.scene)?).map_err(|e| CliError::config(&paths.scene, e))?;
        scene.validate(&desc).map_err(|e| CliError::config(&paths.scene, e))?;
        let behaviors = load_behaviors(&paths.behaviors).map_err(|e| CliError::config(&paths.behaviors, e))?;
        let desc = Arc::new(desc);
        // Surface script/task mismatches now rather than at planner start.
        Planner::new(desc.clone(), controller.clone(), behaviors.clone())
            .map_err(|e| CliError::config(&paths.behaviors, e))?;
        Ok(Self {
            desc,
            controller,
            scene,
            behaviors,
        })
    }

    /// Served at `/api/robot` for the operator panel.
    pub fn document(&self) -> Value {
        let mut behaviors: Vec<&str> = self.behaviors.keys().map(String::as_str).collect();
        behaviors.sort_unstable();
        json!({
            "description": self.desc.document(),
            "frames": self.desc.frame_names().collect::<Vec<_>>(),
            "effectors": self.controller.effectors,
            "behaviors": behaviors,
            "grippers": self.desc.grippers.iter().map(|g| &g.name).collect::<Vec<_>>(),
        })
    }

    pub fn bridge_config(&self, telemetry_rate: f64) -> Result<BridgeConfig, CliError> {
        let throttle = ThrottlePolicy::new(telemetry_rate).map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(BridgeConfig {
            throttle,
            frames: self.desc.frame_names().map(str::to_string).collect(),
            effectors: self.controller.effectors.keys().cloned().collect(),
            behaviors: self.behaviors.keys().cloned().collect::<BTreeSet<_>>(),
        })
    }
}

/// Plant, servo and planner threads sharing one bus.
pub struct RobotStack {
    pub bus: Arc<TopicBus>,
    pub ports: RobotPorts,
    pub servo_timing: Arc<TimingLog>,
    cancel: Cancel,
    threads: Vec<(&'static str, JoinHandle<()>)>,
}

impl RobotStack {
    pub fn start(robot: &LoadedRobot, rt: &RealtimeSection) -> Result<Self, CliError> {
        let bus = Arc::new(TopicBus::new());
        let flags = PlannerFlags::default();
        let ports = RobotPorts::register(&bus, robot.desc.clone(), flags.clone())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let home = robot.controller.home_posture(&robot.desc);
        let hal = Arc::new(SharedMemoryHal::new(PlantState::initial(&robot.desc, &robot.scene, home)));
        let reference = Arc::new(LatestCell::new());
        let servo = Servo::new(
            robot.desc.clone(),
            robot.controller.servo,
            robot.controller.tasks.clone(),
            robot.controller.constraints.clone(),
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        let planner = Planner::new(robot.desc.clone(), robot.controller.clone(), robot.behaviors.clone())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let cancel = Cancel::new();
        let servo_timing = Arc::new(TimingLog::new(SERVO_TIMING_CAP));
        let spawn_err = |e: std::io::Error| CliError::io("spawning executor thread", e);
        let mut threads = Vec::new();
        threads.push((
            "plant",
            run_plant(
                robot.desc.clone(),
                robot.scene.clone(),
                PlantIo {
                    hal: hal.clone(),
                    joint_states: ports.joint_states.clone(),
                    scene_state: Some(ports.scene.clone()),
                },
                PLANT_RATE,
                rt.plant_priority,
                cancel.clone(),
                None,
            )
            .map_err(spawn_err)?,
        ));
        threads.push((
            "servo",
            run_servo(
                servo,
                ServoIo {
                    hal,
                    reference: reference.clone(),
                    status: Some(ports.status.clone()),
                    status_every: STATUS_EVERY,
                },
                rt.servo_priority,
                cancel.clone(),
                Some(servo_timing.clone()),
            )
            .map_err(spawn_err)?,
        ));
        threads.push((
            "planner",
            run_planner(
                planner,
                PlannerIo {
                    bus: bus.clone(),
                    joint_states: ports.joint_states.clone(),
                    commands: ports.commands.clone(),
                    events: ports.events.clone(),
                    reference,
                    flags,
                },
                cancel.clone(),
                None,
            )
            .map_err(spawn_err)?,
        ));
        Ok(Self {
            bus,
            ports,
            servo_timing,
            cancel,
            threads,
        })
    }

    /// Name of an executor that stopped without being asked to.
    pub fn exited(&self) -> Option<&'static str> {
        if self.cancel.is_cancelled() {
            return None;
        }
        self.threads.iter().find(|(_, t)| t.is_finished()).map(|(n, _)| *n)
    }

    /// Stop every executor. Returns the names of those that panicked.
    pub fn stop(mut self) -> Vec<&'static str> {
        self.cancel.cancel();
        self.threads
            .drain(..)
            .filter_map(|(name, t)| t.join().is_err().then_some(name))
            .collect()
    }
}

/// Robot, bridge and server in one process, linked in memory through an
/// optional WAN emulator.
pub struct FullStack {
    pub robot: RobotStack,
    pub server: Server,
    pub bridge_stats: Arc<BridgeStats>,
    pub wan: Option<WanLinkConfig>,
    bridge_cancel: Cancel,
    bridge_task: tokio::task::JoinHandle<()>,
}

impl FullStack {
    pub async fn start(cfg: &CarlConfig, robot: &LoadedRobot, journal: bool) -> Result<Self, CliError> {
        let wan = (!cfg.wan.is_identity()).then_some(cfg.wan);
        let bridge_cfg = robot.bridge_config(cfg.bridge.telemetry_rate)?;
        let server = Server::start(&cfg.server, robot.document(), journal).await?;
        let stack = match RobotStack::start(robot, &cfg.realtime) {
            Ok(s) => s,
            Err(e) => {
                server.shutdown().await;
                return Err(e);
            }
        };
        let (bridge_end, server_end) = match wan {
            Some(w) => wan_link_pair(w).map_err(|e| CliError::config("[wan]", e))?,
            None => link_pair(),
        };
        server.attach_bridge(server_end);
        let bridge = Bridge::new(stack.ports.clone(), bridge_cfg);
        let bridge_stats = bridge.stats();
        let bridge_cancel = Cancel::new();
        let c = bridge_cancel.clone();
        let bridge_task = tokio::spawn(async move { bridge.run_session(bridge_end, &c).await });
        Ok(Self {
            robot: stack,
            server,
            bridge_stats,
            wan,
            bridge_cancel,
            bridge_task,
        })
    }

    /// Name of a component that stopped without being asked to.
    pub fn exited(&self) -> Option<&'static str> {
        if self.bridge_task.is_finished() {
            return Some("bridge");
        }
        self.robot.exited()
    }

    /// Stop the bridge, let frames already on the link arrive, then stop the
    /// server (closing the log) and the robot threads. Returns the names of
    /// executors that panicked.
    pub async fn stop(self) -> Vec<&'static str> {
        self.bridge_cancel.cancel();
        let _ = self.bridge_task.await;
        let in_flight = self
            .wan
            .map(|w| Duration::from_secs_f64((w.latency_ms + w.jitter_ms) / 1000.0))
            .unwrap_or_default();
        tokio::time::sleep(in_flight + Duration::from_millis(100)).await;
        self.server.shutdown().await;
        tokio::task::spawn_blocking(move || self.robot.stop())
            .await
            .unwrap_or_default()
    }
}
