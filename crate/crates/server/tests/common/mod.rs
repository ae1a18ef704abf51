#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use futures::{SinkExt, StreamExt};
use parking_lot::Mutex;
use serde_json::json;
use tokio::net::TcpStream;
use tokio::time::{timeout, Duration};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use carl_bridge::{link_pair, AckPayload, Envelope, EnvelopeType, LinkEnd};
use carl_core::command::{CommandPayload, RobotEvent};
use carl_server::{LeasePayload, Server, ServerConfig};

pub struct Harness {
    pub server: Server,
    pub dir: tempfile::TempDir,
    pub bridge: FakeBridge,
}

pub async fn start(lease_timeout_s: f64) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("static")).unwrap();
    std::fs::write(dir.path().join("static/index.html"), "<html>panel</html>").unwrap();
    let cfg = ServerConfig {
        listen: "127.0.0.1:0".into(),
        log_path: dir.path().join("log/telemetry.ndjson"),
        static_dir: dir.path().join("static"),
        lease_timeout_s,
        ..Default::default()
    };
    let robot = json!({ "description": { "name": "demo" }, "frames": ["right_palm", "left_palm"] });
    let server = Server::start(&cfg, robot, true).await.unwrap();
    let (robot_side, server_side) = link_pair();
    server.attach_bridge(server_side);
    let bridge = FakeBridge::spawn(robot_side);
    Harness { server, dir, bridge }
}

/// Robot end of the link: accepts every command, reports power changes as
/// events and can inject telemetry.
#[derive(Clone)]
pub struct FakeBridge {
    pub received: Arc<Mutex<Vec<(u64, CommandPayload)>>>,
    tx: tokio::sync::mpsc::UnboundedSender<String>,
    seq: Arc<Mutex<u64>>,
}

impl FakeBridge {
    fn spawn(link: LinkEnd) -> Self {
        let LinkEnd { tx, mut rx } = link;
        let me = Self {
            received: Arc::default(),
            tx: tx.clone(),
            seq: Arc::default(),
        };
        let received = me.received.clone();
        tokio::spawn(async move {
            let mut ack_seq = 0;
            let mut event_seq = 0;
            while let Some(text) = rx.recv().await {
                let env = Envelope::parse(&text).unwrap();
                let payload: CommandPayload = serde_json::from_value(env.payload).unwrap();
                received.lock().push((env.seq, payload.clone()));
                ack_seq += 1;
                let ack = serde_json::to_value(AckPayload::accepted(env.seq)).unwrap();
                let _ = tx.send(Envelope::new(EnvelopeType::Ack, "/operator_cmds", ack_seq, 0.0, ack).to_text());
                if let Some(action) = payload.action.as_deref().filter(|_| payload.kind == carl_core::command::CommandKind::Power) {
                    event_seq += 1;
                    let ev = serde_json::to_value(RobotEvent::Power { on: action == "on" }).unwrap();
                    let _ = tx.send(Envelope::new(EnvelopeType::Event, "/events", event_seq, 0.0, ev).to_text());
                }
            }
        });
        me
    }

    pub fn telemetry(&self, k: u64) {
        let mut seq = self.seq.lock();
        *seq += 1;
        let payload = json!({ "sample_t": k as f64, "q": [k as f64], "effectors": {}, "grippers": {}, "status": {} });
        let _ = self
            .tx
            .send(Envelope::new(EnvelopeType::Telemetry, "/joint_states", *seq, 0.0, payload).to_text());
    }
}

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

/// A scripted browser.
pub struct Client {
    pub ws: Ws,
    pub seq: u64,
    pub lease: Option<LeasePayload>,
    pub telemetry: Vec<u64>,
    pub events: Vec<RobotEvent>,
    pub acks: HashMap<u64, AckPayload>,
}

impl Client {
    pub async fn connect(h: &Harness) -> Self {
        let url = format!("ws://{}/ws", h.server.http_addr);
        let (ws, _) = connect_async(url).await.unwrap();
        let mut c = Self {
            ws,
            seq: 0,
            lease: None,
            telemetry: Vec::new(),
            events: Vec::new(),
            acks: HashMap::new(),
        };
        c.until(|c| c.lease.is_some()).await;
        c
    }

    pub async fn send_command(&mut self, payload: &CommandPayload) -> u64 {
        self.seq += 1;
        let env = Envelope::command(self.seq, 0.0, payload);
        self.ws.send(Message::text(env.to_text())).await.unwrap();
        self.seq
    }

    pub async fn command(&mut self, payload: &CommandPayload) -> AckPayload {
        let seq = self.send_command(payload).await;
        self.until(|c| c.acks.contains_key(&seq)).await;
        self.acks[&seq].clone()
    }

    pub async fn lease_action(&mut self, action: &str) {
        self.seq += 1;
        let env = Envelope::new(EnvelopeType::Lease, "/lease", self.seq, 0.0, json!({ "action": action }));
        self.ws.send(Message::text(env.to_text())).await.unwrap();
    }

    fn absorb(&mut self, text: &str) {
        let env = Envelope::parse(text).unwrap();
        match env.kind {
            EnvelopeType::Lease => self.lease = Some(serde_json::from_value(env.payload).unwrap()),
            EnvelopeType::Ack => {
                let ack: AckPayload = serde_json::from_value(env.payload).unwrap();
                self.acks.insert(ack.of_seq, ack);
            }
            EnvelopeType::Event => self.events.push(serde_json::from_value(env.payload).unwrap()),
            EnvelopeType::Telemetry => self.telemetry.push(env.seq),
            EnvelopeType::Command => panic!("server sent a command"),
        }
    }

    /// Read frames until `done` holds; panics after five seconds.
    pub async fn until(&mut self, done: impl Fn(&Self) -> bool) {
        let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
        while !done(self) {
            let msg = tokio::time::timeout_at(deadline, self.ws.next())
                .await
                .expect("timed out waiting for server")
                .expect("socket closed")
                .unwrap();
            if let Message::Text(t) = msg {
                self.absorb(t.as_str());
            }
        }
    }

    /// Read whatever arrives within `window`.
    pub async fn drain_for(&mut self, window: Duration) {
        while let Ok(Some(Ok(msg))) = timeout(window, self.ws.next()).await {
            if let Message::Text(t) = msg {
                self.absorb(t.as_str());
            }
        }
    }

    pub fn role(&self) -> carl_server::Role {
        self.lease.as_ref().unwrap().role
    }
}
