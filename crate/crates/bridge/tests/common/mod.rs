#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use carl_bridge::{BridgeConfig, Envelope, EnvelopeType, RobotPorts, ThrottlePolicy};
use carl_core::bus::TopicBus;
use carl_core::config::ControllerConfig;
use carl_core::kinematics::{load_description, JointState};
use carl_core::planner::PlannerFlags;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub struct Fixture {
    pub bus: TopicBus,
    pub ports: RobotPorts,
    pub cfg: BridgeConfig,
    pub home: JointState,
}

pub fn fixture(rate: f64) -> Fixture {
    let read = |p: &str| std::fs::read_to_string(root().join(p)).unwrap();
    let desc = Arc::new(load_description(&read("robots/demo_humanoid.json")).unwrap());
    let ctrl = ControllerConfig::parse(&read("config/controller.json")).unwrap();
    let bus = TopicBus::new();
    let ports = RobotPorts::register(&bus, desc.clone(), PlannerFlags::default()).unwrap();
    let cfg = BridgeConfig {
        throttle: ThrottlePolicy::new(rate).unwrap(),
        frames: desc.frame_names().map(String::from).collect(),
        effectors: ctrl.effectors.keys().cloned().collect(),
        behaviors: ["wave", "handshake", "horns"].map(String::from).into(),
    };
    let home = JointState::at_rest(0.0, ctrl.home_posture(&desc));
    Fixture { bus, ports, cfg, home }
}

pub fn power(ports: &RobotPorts, on: bool) {
    ports.flags.powered.store(on, Ordering::Release);
}

/// Parse every frame and keep those of one type.
pub fn of_type(frames: &[String], kind: EnvelopeType) -> Vec<Envelope> {
    frames
        .iter()
        .map(|f| Envelope::parse(f).unwrap())
        .filter(|e| e.kind == kind)
        .collect()
}
