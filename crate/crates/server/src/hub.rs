//! The server's single command path. One task owns the session table, the
//! lease, the power state and the map of commands awaiting a bridge ack;
//! everything else talks to it through messages.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot};
use tokio::time::{interval, Duration, Instant, MissedTickBehavior};

use carl_bridge::envelope::{EVENT_TOPIC, LEASE_TOPIC};
use carl_bridge::{AckPayload, Envelope, EnvelopeType};
use carl_core::command::{CommandPayload, OperatorCommand, RobotEvent};

use crate::lease::{JournalEntry, LeaseTable, Role, SessionId};

/// How often idle leases and stale pending commands are checked.
pub const CHECK_PERIOD: Duration = Duration::from_millis(250);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubConfig {
    pub lease_timeout: Duration,
    /// Commands without a bridge ack after this long are answered "timeout".
    pub pending_timeout: Duration,
    /// Keep the full lease journal in memory (tests and audits).
    pub journal: bool,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            lease_timeout: Duration::from_secs(30),
            pending_timeout: Duration::from_secs(30),
            journal: false,
        }
    }
}

/// Lease state as told to one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeasePayload {
    pub session: SessionId,
    pub role: Role,
    /// Whether any session currently holds the lease.
    pub held: bool,
    pub epoch: u64,
    pub powered: bool,
    pub timeout_s: f64,
}

/// What a client may put in a lease envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaseAction {
    Request,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaseRequest {
    pub action: LeaseAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubSnapshot {
    pub holder: Option<SessionId>,
    pub epoch: u64,
    pub sessions: usize,
    pub powered: bool,
    pub bridge_connected: bool,
    pub forwarded: u64,
    pub pending: usize,
    pub rejected: BTreeMap<String, u64>,
    #[serde(skip)]
    pub journal: Vec<JournalEntry>,
}

enum HubMsg {
    Connect {
        id: SessionId,
        control: mpsc::UnboundedSender<String>,
    },
    Disconnect {
        id: SessionId,
    },
    FromClient {
        id: SessionId,
        text: String,
    },
    BridgeAttached {
        link: u64,
        tx: mpsc::UnboundedSender<String>,
    },
    BridgeDetached {
        link: u64,
    },
    FromBridge(Envelope),
    Snapshot(oneshot::Sender<HubSnapshot>),
}

/// Cheap, cloneable handle to the hub task.
#[derive(Debug, Clone)]
pub struct HubHandle {
    tx: mpsc::UnboundedSender<HubMsg>,
}

impl HubHandle {
    /// Register a session. Control frames (acks, events, lease notices) for
    /// it are sent on `control`.
    pub fn connect(&self, id: SessionId, control: mpsc::UnboundedSender<String>) {
        let _ = self.tx.send(HubMsg::Connect { id, control });
    }

    pub fn disconnect(&self, id: SessionId) {
        let _ = self.tx.send(HubMsg::Disconnect { id });
    }

    pub fn client_text(&self, id: SessionId, text: String) {
        let _ = self.tx.send(HubMsg::FromClient { id, text });
    }

    pub(crate) fn bridge_attached(&self, link: u64, tx: mpsc::UnboundedSender<String>) {
        let _ = self.tx.send(HubMsg::BridgeAttached { link, tx });
    }

    pub(crate) fn bridge_detached(&self, link: u64) {
        let _ = self.tx.send(HubMsg::BridgeDetached { link });
    }

    pub(crate) fn from_bridge(&self, env: Envelope) {
        let _ = self.tx.send(HubMsg::FromBridge(env));
    }

    /// `None` once the hub has stopped.
    pub async fn snapshot(&self) -> Option<HubSnapshot> {
        let (reply, wait) = oneshot::channel();
        self.tx.send(HubMsg::Snapshot(reply)).ok()?;
        wait.await.ok()
    }
}

/// Sequence counters for envelopes the server originates, one per type.
#[derive(Debug, Default)]
struct OutboundSeq {
    counters: HashMap<EnvelopeType, u64>,
}

impl OutboundSeq {
    fn next(&mut self, kind: EnvelopeType) -> u64 {
        let c = self.counters.entry(kind).or_default();
        *c += 1;
        *c
    }
}

struct Pending {
    session: SessionId,
    client_seq: u64,
    command: OperatorCommand,
    sent_at: Instant,
}

struct Hub {
    cfg: HubConfig,
    origin: Instant,
    lease: LeaseTable,
    clients: HashMap<SessionId, mpsc::UnboundedSender<String>>,
    powered: bool,
    bridge: Option<(u64, mpsc::UnboundedSender<String>)>,
    pending: HashMap<u64, Pending>,
    server_seq: u64,
    forwarded: u64,
    rejected: BTreeMap<String, u64>,
    out: OutboundSeq,
}

/// Start the hub task on the current runtime.
pub fn spawn_hub(cfg: HubConfig) -> HubHandle {
    let (tx, rx) = mpsc::unbounded_channel();
    let lease = LeaseTable::new(cfg.lease_timeout.as_secs_f64());
    let lease = if cfg.journal { lease } else { lease.without_journal() };
    let hub = Hub {
        cfg,
        origin: Instant::now(),
        lease,
        clients: HashMap::new(),
        powered: false,
        bridge: None,
        pending: HashMap::new(),
        server_seq: 0,
        forwarded: 0,
        rejected: BTreeMap::new(),
        out: OutboundSeq::default(),
    };
    tokio::spawn(hub.run(rx));
    HubHandle { tx }
}

impl Hub {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<HubMsg>) {
        let mut check = interval(CHECK_PERIOD);
        check.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                msg = rx.recv() => match msg {
                    Some(msg) => self.handle(msg),
                    None => break,
                },
                _ = check.tick() => self.check_timeouts(),
            }
        }
    }

    fn handle(&mut self, msg: HubMsg) {
        match msg {
            HubMsg::Connect { id, control } => {
                let now = self.now();
                self.clients.insert(id, control);
                let role = self.lease.connect(id, now);
                tracing::info!(session = %id, ?role, "session connected");
                if role == Role::Operator {
                    self.broadcast_lease();
                } else {
                    self.send_lease(id);
                }
            }
            HubMsg::Disconnect { id } => {
                let now = self.now();
                self.clients.remove(&id);
                if self.lease.disconnect(id, now) {
                    self.broadcast_lease();
                }
                tracing::info!(session = %id, "session closed");
            }
            HubMsg::FromClient { id, text } => self.on_client_text(id, &text),
            HubMsg::BridgeAttached { link, tx } => {
                tracing::info!(link, "bridge attached");
                self.bridge = Some((link, tx));
            }
            HubMsg::BridgeDetached { link } => {
                if self.bridge.as_ref().is_some_and(|(l, _)| *l == link) {
                    tracing::info!(link, "bridge detached");
                    self.bridge = None;
                    let lost: Vec<u64> = self.pending.keys().copied().collect();
                    for seq in lost {
                        if let Some(p) = self.pending.remove(&seq) {
                            self.reply_ack(p.session, AckPayload::rejected(p.client_seq, "bridge_unavailable"));
                        }
                    }
                }
            }
            HubMsg::FromBridge(env) => self.on_bridge_envelope(env),
            HubMsg::Snapshot(reply) => {
                let _ = reply.send(HubSnapshot {
                    holder: self.lease.holder(),
                    epoch: self.lease.epoch(),
                    sessions: self.clients.len(),
                    powered: self.powered,
                    bridge_connected: self.bridge.is_some(),
                    forwarded: self.forwarded,
                    pending: self.pending.len(),
                    rejected: self.rejected.clone(),
                    journal: self.lease.journal().to_vec(),
                });
            }
        }
    }

    fn check_timeouts(&mut self) {
        let now = self.now();
        if let Some(id) = self.lease.expire(now) {
            tracing::info!(session = %id, "lease expired after inactivity");
            self.broadcast_lease();
        }
        let limit = self.cfg.pending_timeout;
        let stale: Vec<u64> = self
            .pending
            .iter()
            .filter(|(_, p)| p.sent_at.elapsed() >= limit)
            .map(|(s, _)| *s)
            .collect();
        for seq in stale {
            if let Some(p) = self.pending.remove(&seq) {
                self.reply_ack(p.session, AckPayload::rejected(p.client_seq, "timeout"));
            }
        }
    }

    fn on_client_text(&mut self, id: SessionId, text: &str) {
        if !self.clients.contains_key(&id) {
            return;
        }
        let env = match Envelope::parse(text) {
            Ok(env) => env,
            Err(e) => {
                if let Some(seq) = e.seq() {
                    let reason = match e {
                        carl_bridge::envelope::DecodeError::Version { .. } => e.reason(),
                        _ => "invalid",
                    };
                    self.reject(id, seq, reason);
                }
                return;
            }
        };
        match env.kind {
            EnvelopeType::Command => self.route_command(id, env),
            EnvelopeType::Lease => match serde_json::from_value::<LeaseRequest>(env.payload) {
                Ok(req) => self.on_lease_request(id, req.action),
                Err(_) => self.send_lease(id),
            },
            _ => self.reject(id, env.seq, "invalid"),
        }
    }

    fn on_lease_request(&mut self, id: SessionId, action: LeaseAction) {
        let now = self.now();
        let before = self.lease.holder();
        match action {
            LeaseAction::Request => {
                self.lease.request(id, now);
            }
            LeaseAction::Release => {
                self.lease.give_up(id, now);
            }
        }
        if self.lease.holder() != before {
            self.broadcast_lease();
        } else {
            self.send_lease(id);
        }
    }

    fn route_command(&mut self, id: SessionId, env: Envelope) {
        let seq = env.seq;
        if !self.lease.is_holder(id) {
            return self.reject(id, seq, "no_lease");
        }
        let Ok(payload) = serde_json::from_value::<CommandPayload>(env.payload) else {
            return self.reject(id, seq, "invalid");
        };
        let Ok(command) = payload.to_command() else {
            return self.reject(id, seq, "invalid");
        };
        let now = self.now();
        self.lease.touch(id, now);
        if !self.powered && !matches!(command, OperatorCommand::Power { .. }) {
            return self.reject(id, seq, "power_off");
        }
        let Some((_, bridge)) = &self.bridge else {
            return self.reject(id, seq, "bridge_unavailable");
        };
        let server_seq = self.server_seq + 1;
        if bridge.send(Envelope::command(server_seq, now, &payload).to_text()).is_err() {
            self.bridge = None;
            return self.reject(id, seq, "bridge_unavailable");
        }
        self.server_seq = server_seq;
        self.forwarded += 1;
        self.lease.record_forward(id, server_seq, now);
        self.pending.insert(
            server_seq,
            Pending {
                session: id,
                client_seq: seq,
                command,
                sent_at: Instant::now(),
            },
        );
    }

    fn on_bridge_envelope(&mut self, env: Envelope) {
        match env.kind {
            EnvelopeType::Ack => {
                let Ok(ack) = serde_json::from_value::<AckPayload>(env.payload) else {
                    tracing::warn!(seq = env.seq, "unreadable ack from bridge");
                    return;
                };
                let Some(p) = self.pending.remove(&ack.of_seq) else {
                    tracing::debug!(of_seq = ack.of_seq, "ack for unknown or expired command");
                    return;
                };
                if ack.is_accepted() {
                    if let OperatorCommand::Power { on } = p.command {
                        self.set_powered(on);
                    }
                } else if let Some(reason) = &ack.reason {
                    *self.rejected.entry(reason.clone()).or_default() += 1;
                }
                self.reply_ack(
                    p.session,
                    AckPayload {
                        of_seq: p.client_seq,
                        ..ack
                    },
                );
            }
            EnvelopeType::Event => {
                if let Ok(RobotEvent::Power { on }) = serde_json::from_value::<RobotEvent>(env.payload.clone()) {
                    self.set_powered(on);
                }
                let seq = self.out.next(EnvelopeType::Event);
                let text = Envelope::new(EnvelopeType::Event, EVENT_TOPIC, seq, self.now(), env.payload).to_text();
                for tx in self.clients.values() {
                    let _ = tx.send(text.clone());
                }
            }
            other => tracing::debug!(kind = ?other, "ignoring bridge envelope"),
        }
    }

    fn set_powered(&mut self, on: bool) {
        if self.powered != on {
            self.powered = on;
            self.broadcast_lease();
        }
    }

    fn reject(&mut self, id: SessionId, seq: u64, reason: &str) {
        *self.rejected.entry(reason.to_string()).or_default() += 1;
        self.reply_ack(id, AckPayload::rejected(seq, reason));
    }

    fn reply_ack(&mut self, id: SessionId, ack: AckPayload) {
        let Some(tx) = self.clients.get(&id) else {
            return;
        };
        let seq = self.out.next(EnvelopeType::Ack);
        let env = Envelope::new(
            EnvelopeType::Ack,
            carl_bridge::envelope::COMMAND_TOPIC,
            seq,
            self.origin.elapsed().as_secs_f64(),
            serde_json::to_value(&ack).expect("acks serialize"),
        );
        let _ = tx.send(env.to_text());
    }

    fn lease_text(&mut self, id: SessionId) -> Option<String> {
        let role = self.lease.role(id)?;
        let payload = LeasePayload {
            session: id,
            role,
            held: self.lease.holder().is_some(),
            epoch: self.lease.epoch(),
            powered: self.powered,
            timeout_s: self.lease.timeout(),
        };
        let seq = self.out.next(EnvelopeType::Lease);
        let env = Envelope::new(
            EnvelopeType::Lease,
            LEASE_TOPIC,
            seq,
            self.now(),
            serde_json::to_value(&payload).expect("lease payloads serialize"),
        );
        Some(env.to_text())
    }

    fn send_lease(&mut self, id: SessionId) {
        if let Some(text) = self.lease_text(id) {
            if let Some(tx) = self.clients.get(&id) {
                let _ = tx.send(text);
            }
        }
    }

    fn broadcast_lease(&mut self) {
        let ids: Vec<SessionId> = self.clients.keys().copied().collect();
        for id in ids {
            self.send_lease(id);
        }
    }
}
