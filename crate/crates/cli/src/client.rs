//! Operator-side WebSocket client used by the headless scenario runner.

use std::collections::HashMap;

use futures::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio::time::{Duration, Instant};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use carl_bridge::{AckPayload, Envelope, EnvelopeType, TelemetryPayload};
use carl_core::command::{CommandPayload, RobotEvent};
use carl_server::{LeasePayload, Role};

use crate::error::CliError;

/// Everything the client has seen so far.
#[derive(Debug, Default)]
pub struct ClientView {
    pub lease: Option<LeasePayload>,
    pub acks: HashMap<u64, (AckPayload, Instant)>,
    pub events: Vec<RobotEvent>,
    pub first_telemetry: Option<TelemetryPayload>,
    pub telemetry: Option<TelemetryPayload>,
    pub telemetry_count: u64,
    pub undecodable: u64,
}

impl ClientView {
    pub fn is_operator(&self) -> bool {
        self.lease.as_ref().is_some_and(|l| l.held && l.role == Role::Operator)
    }

    fn absorb(&mut self, text: &str, at: Instant) {
        let Ok(env) = Envelope::parse(text) else {
            self.undecodable += 1;
            return;
        };
        let ok = match env.kind {
            EnvelopeType::Lease => serde_json::from_value(env.payload).map(|l| self.lease = Some(l)).is_ok(),
            EnvelopeType::Ack => serde_json::from_value::<AckPayload>(env.payload)
                .map(|a| {
                    self.acks.insert(a.of_seq, (a, at));
                })
                .is_ok(),
            EnvelopeType::Event => serde_json::from_value(env.payload).map(|e| self.events.push(e)).is_ok(),
            EnvelopeType::Telemetry => serde_json::from_value::<TelemetryPayload>(env.payload)
                .map(|t| {
                    self.telemetry_count += 1;
                    if self.first_telemetry.is_none() {
                        self.first_telemetry = Some(t.clone());
                    }
                    self.telemetry = Some(t);
                })
                .is_ok(),
            EnvelopeType::Command => false,
        };
        if !ok {
            self.undecodable += 1;
        }
    }
}

pub struct OperatorClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    seq: u64,
    started: Instant,
    pub view: ClientView,
}

impl OperatorClient {
    pub async fn connect(url: &str) -> Result<Self, CliError> {
        let (ws, _) = connect_async(url)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot connect to {url}: {e}")))?;
        Ok(Self {
            ws,
            seq: 0,
            started: Instant::now(),
            view: ClientView::default(),
        })
    }

    /// Read frames until `done` holds or `deadline` passes. Returns whether
    /// `done` held.
    pub async fn until(&mut self, deadline: Instant, mut done: impl FnMut(&ClientView) -> bool) -> Result<bool, CliError> {
        while !done(&self.view) {
            match tokio::time::timeout_at(deadline, self.ws.next()).await {
                Err(_) => return Ok(false),
                Ok(None) => return Err(CliError::Runtime("server closed the connection".into())),
                Ok(Some(Err(e))) => return Err(CliError::Runtime(format!("websocket: {e}"))),
                Ok(Some(Ok(Message::Text(t)))) => self.view.absorb(t.as_str(), Instant::now()),
                Ok(Some(Ok(_))) => {}
            }
        }
        Ok(true)
    }

    /// Keep reading for `window`.
    pub async fn pump_for(&mut self, window: Duration) -> Result<(), CliError> {
        self.until(Instant::now() + window, |_| false).await.map(|_| ())
    }

    async fn send(&mut self, env: Envelope) -> Result<(), CliError> {
        self.ws
            .send(Message::text(env.to_text()))
            .await
            .map_err(|e| CliError::Runtime(format!("websocket send: {e}")))
    }

    /// Make sure this client holds the operator lease.
    pub async fn acquire_lease(&mut self, deadline: Instant) -> Result<(), CliError> {
        if !self.until(deadline.min(Instant::now() + Duration::from_secs(5)), |v| v.lease.is_some()).await? {
            return Err(CliError::Runtime("server sent no lease state".into()));
        }
        if !self.view.is_operator() {
            self.seq += 1;
            let payload = serde_json::json!({ "action": "request" });
            let env = Envelope::new(EnvelopeType::Lease, "/lease", self.seq, self.elapsed(), payload);
            self.send(env).await?;
        }
        if self.until(deadline, ClientView::is_operator).await? {
            Ok(())
        } else {
            Err(CliError::Runtime("operator lease not granted".into()))
        }
    }

    fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    /// Send a command and wait for its ack. Returns the ack and the round
    /// trip.
    pub async fn command(&mut self, payload: &CommandPayload, deadline: Instant) -> Result<(AckPayload, Duration), CliError> {
        self.seq += 1;
        let seq = self.seq;
        let env = Envelope::command(seq, self.elapsed(), payload);
        let sent = Instant::now();
        self.send(env).await?;
        if !self.until(deadline, |v| v.acks.contains_key(&seq)).await? {
            return Err(CliError::ScenarioFailed(format!("no ack for command {seq} before the deadline")));
        }
        let (ack, at) = self.view.acks[&seq].clone();
        Ok((ack, at - sent))
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}
