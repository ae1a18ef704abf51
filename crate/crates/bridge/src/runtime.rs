//! The bridge process: uplink pump, downlink dispatch and event forwarding
//! over one link session at a time.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use tokio::time::{Duration, Instant};

use carl_core::bus::{self, BusError, LatestTopic, QueuedTopic, TopicBus};
use carl_core::command::{CommandPayload, CommandRecord, OperatorCommand, RobotEvent};
use carl_core::controller::ControllerStatus;
use carl_core::kinematics::{JointState, RobotDescription};
use carl_core::periodic::Cancel;
use carl_core::planner::PlannerFlags;
use carl_core::sim::SceneState;

use crate::envelope::{AckPayload, Envelope, EnvelopeType, COMMAND_TOPIC, EVENT_TOPIC, TELEMETRY_TOPIC};
use crate::link::{tcp_link, Backoff, LinkEnd};
use crate::telemetry::compose_telemetry;
use crate::throttle::{Throttle, ThrottlePolicy};
use crate::wan::WanLinkConfig;

/// Robot-side topics and flags the bridge reads and writes.
#[derive(Clone)]
pub struct RobotPorts {
    pub desc: Arc<RobotDescription>,
    pub joint_states: Arc<LatestTopic<JointState>>,
    pub status: Arc<LatestTopic<ControllerStatus>>,
    pub scene: Arc<LatestTopic<SceneState>>,
    pub commands: Arc<QueuedTopic<CommandRecord>>,
    pub events: Arc<QueuedTopic<RobotEvent>>,
    pub flags: PlannerFlags,
}

impl RobotPorts {
    /// Register the standard robot topics on `bus`.
    pub fn register(bus: &TopicBus, desc: Arc<RobotDescription>, flags: PlannerFlags) -> Result<Self, BusError> {
        Ok(Self {
            desc,
            joint_states: bus.register_latest(bus::JOINT_STATES)?,
            status: bus.register_latest(bus::CONTROLLER_STATUS)?,
            scene: bus.register_latest(bus::SCENE)?,
            commands: bus.register_queued(bus::OPERATOR_CMDS, bus::DEFAULT_QUEUE_CAP)?,
            events: bus.register_queued(bus::EVENTS, bus::DEFAULT_QUEUE_CAP)?,
            flags,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub throttle: ThrottlePolicy,
    /// Frames whose poses go into each telemetry frame.
    pub frames: Vec<String>,
    pub effectors: BTreeSet<String>,
    pub behaviors: BTreeSet<String>,
}

/// Counters kept across reconnects.
#[derive(Debug, Default)]
pub struct BridgeStats {
    pub telemetry_sent: AtomicU64,
    pub acks_sent: AtomicU64,
    pub events_sent: AtomicU64,
    pub commands_accepted: AtomicU64,
    pub commands_rejected: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub telemetry_sent: u64,
    pub acks_sent: u64,
    pub events_sent: u64,
    pub commands_accepted: u64,
    pub commands_rejected: u64,
}

impl BridgeStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            telemetry_sent: self.telemetry_sent.load(Ordering::Acquire),
            acks_sent: self.acks_sent.load(Ordering::Acquire),
            events_sent: self.events_sent.load(Ordering::Acquire),
            commands_accepted: self.commands_accepted.load(Ordering::Acquire),
            commands_rejected: self.commands_rejected.load(Ordering::Acquire),
        }
    }
}

/// Semantic command checks performed before anything reaches the planner.
#[derive(Debug, Clone)]
pub struct CommandValidator {
    effectors: BTreeSet<String>,
    behaviors: BTreeSet<String>,
    flags: PlannerFlags,
}

impl CommandValidator {
    pub fn new(cfg: &BridgeConfig, flags: PlannerFlags) -> Self {
        Self {
            effectors: cfg.effectors.clone(),
            behaviors: cfg.behaviors.clone(),
            flags,
        }
    }

    /// Decode and check one inbound frame. `Err` carries the seq to ack
    /// (if recoverable) and the rejection reason.
    pub fn check(&self, text: &str) -> Result<(u64, OperatorCommand), (Option<u64>, String)> {
        let env = Envelope::parse(text).map_err(|e| (e.seq(), e.reason().to_string()))?;
        let seq = env.seq;
        if env.kind != EnvelopeType::Command {
            return Err((Some(seq), "malformed".into()));
        }
        let payload: CommandPayload = serde_json::from_value(env.payload).map_err(|_| (Some(seq), "malformed".to_string()))?;
        let cmd = payload.to_command().map_err(|_| (Some(seq), "malformed".to_string()))?;
        let reject = |r: &str| Err((Some(seq), r.to_string()));
        match &cmd {
            OperatorCommand::Select { effector: Some(e), .. }
            | OperatorCommand::Delta { effector: Some(e), .. }
            | OperatorCommand::Gripper { effector: Some(e), .. }
                if !self.effectors.contains(e) =>
            {
                return reject("unknown effector");
            }
            OperatorCommand::Behavior { name } if !self.behaviors.contains(name) => {
                return reject("unknown behavior");
            }
            _ => {}
        }
        let moves = matches!(cmd, OperatorCommand::Delta { .. } | OperatorCommand::Behavior { .. });
        let needs_power = moves || matches!(cmd, OperatorCommand::Gripper { .. });
        if needs_power && !self.flags.powered.load(Ordering::Acquire) {
            return reject("power_off");
        }
        if moves && self.flags.busy.load(Ordering::Acquire) {
            return reject("busy");
        }
        Ok((seq, cmd))
    }

    /// Record the effect of an accepted command before the planner sees it,
    /// so that a second command in the same planner period is judged
    /// against it.
    pub fn note_accepted(&self, cmd: &OperatorCommand) {
        match cmd {
            OperatorCommand::Delta { .. } | OperatorCommand::Behavior { .. } => {
                self.flags.busy.store(true, Ordering::Release)
            }
            OperatorCommand::Power { on } => self.flags.powered.store(*on, Ordering::Release),
            _ => {}
        }
    }
}

pub struct Bridge {
    ports: RobotPorts,
    cfg: BridgeConfig,
    stats: Arc<BridgeStats>,
    validator: CommandValidator,
}

impl Bridge {
    pub fn new(ports: RobotPorts, cfg: BridgeConfig) -> Self {
        let validator = CommandValidator::new(&cfg, ports.flags.clone());
        Self {
            ports,
            cfg,
            stats: Arc::new(BridgeStats::default()),
            validator,
        }
    }

    pub fn stats(&self) -> Arc<BridgeStats> {
        self.stats.clone()
    }

    /// Serve one link until it closes or `cancel` is set.
    pub async fn run_session(&self, link: LinkEnd, cancel: &Cancel) {
        let LinkEnd { tx, rx } = link;
        let origin = Instant::now();
        tokio::select! {
            _ = self.uplink_pump(&tx, origin) => {}
            _ = self.downlink_dispatch(rx, &tx, origin) => {}
            _ = self.event_pump(&tx, origin) => {}
            _ = wait_cancel(cancel) => {}
        }
    }

    /// Send the newest joint sample at most `rate` times per second.
    async fn uplink_pump(&self, tx: &mpsc::UnboundedSender<String>, origin: Instant) {
        let mut throttle = Throttle::new(self.cfg.throttle);
        let poll = Duration::from_millis(1);
        loop {
            let now = origin.elapsed().as_secs_f64();
            if let Some(rec) = self.ports.joint_states.latest() {
                if throttle.offer(now, rec.seq) {
                    let status = self.ports.status.latest();
                    let scene = self.ports.scene.latest();
                    let frame = compose_telemetry(
                        &self.ports.desc,
                        &self.cfg.frames,
                        &rec.value,
                        status.as_ref().map(|s| &s.value),
                        scene.as_ref().map(|s| &s.value),
                    );
                    let env = Envelope::new(
                        EnvelopeType::Telemetry,
                        TELEMETRY_TOPIC,
                        rec.seq,
                        now,
                        serde_json::to_value(&frame).expect("telemetry serializes"),
                    );
                    if tx.send(env.to_text()).is_err() {
                        return;
                    }
                    self.stats.telemetry_sent.fetch_add(1, Ordering::AcqRel);
                }
            }
            let now = origin.elapsed().as_secs_f64();
            let wait = match throttle.next_slot() {
                // Rounding up keeps a sub-nanosecond remainder from turning
                // into a zero-length sleep that never reaches the slot.
                Some(slot) if slot > now => Duration::from_secs_f64(slot - now).max(Duration::from_micros(1)),
                _ => poll,
            };
            tokio::time::sleep(wait).await;
        }
    }

    /// Validate each inbound command, republish accepted ones and ack all.
    async fn downlink_dispatch(
        &self,
        mut rx: mpsc::UnboundedReceiver<String>,
        tx: &mpsc::UnboundedSender<String>,
        origin: Instant,
    ) {
        let mut ack_seq = 0u64;
        while let Some(text) = rx.recv().await {
            let ack = match self.validator.check(&text) {
                Ok((seq, command)) => {
                    self.validator.note_accepted(&command);
                    self.ports.commands.publish(CommandRecord { origin_seq: seq, command });
                    self.stats.commands_accepted.fetch_add(1, Ordering::AcqRel);
                    AckPayload::accepted(seq)
                }
                Err((seq, reason)) => {
                    self.stats.commands_rejected.fetch_add(1, Ordering::AcqRel);
                    match seq {
                        Some(seq) => AckPayload::rejected(seq, reason),
                        None => {
                            tracing::debug!(%reason, "dropping undecodable frame without seq");
                            continue;
                        }
                    }
                }
            };
            ack_seq += 1;
            let env = Envelope::new(
                EnvelopeType::Ack,
                COMMAND_TOPIC,
                ack_seq,
                origin.elapsed().as_secs_f64(),
                serde_json::to_value(&ack).expect("acks serialize"),
            );
            if tx.send(env.to_text()).is_err() {
                return;
            }
            self.stats.acks_sent.fetch_add(1, Ordering::AcqRel);
        }
    }

    async fn event_pump(&self, tx: &mpsc::UnboundedSender<String>, origin: Instant) {
        let mut seq = 0u64;
        loop {
            for rec in self.ports.events.drain() {
                seq += 1;
                let env = Envelope::new(
                    EnvelopeType::Event,
                    EVENT_TOPIC,
                    seq,
                    origin.elapsed().as_secs_f64(),
                    serde_json::to_value(&rec.value).expect("events serialize"),
                );
                if tx.send(env.to_text()).is_err() {
                    return;
                }
                self.stats.events_sent.fetch_add(1, Ordering::AcqRel);
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }

    /// Keep a TCP session to `addr` alive, reconnecting with backoff.
    pub async fn run_tcp_client(&self, addr: &str, wan: Option<WanLinkConfig>, cancel: Cancel) {
        let mut backoff = Backoff::default();
        while !cancel.is_cancelled() {
            match tokio::net::TcpStream::connect(addr).await {
                Ok(stream) => {
                    backoff.reset();
                    tracing::info!(%addr, "bridge connected");
                    match tcp_link(stream, wan) {
                        Ok(link) => self.run_session(link, &cancel).await,
                        Err(e) => tracing::warn!(error = %e, "bridge link setup failed"),
                    }
                    tracing::info!(%addr, "bridge disconnected");
                }
                Err(e) => tracing::debug!(%addr, error = %e, "bridge connect failed"),
            }
            if cancel.is_cancelled() {
                break;
            }
            tokio::select! {
                _ = tokio::time::sleep(backoff.next_delay()) => {}
                _ = wait_cancel(&cancel) => {}
            }
        }
    }
}

async fn wait_cancel(cancel: &Cancel) {
    while !cancel.is_cancelled() {
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}
