//! The web portal: browser sessions, the single-operator lease, command
//! routing to the bridge, telemetry fan-out and the telemetry log.

pub mod config;
pub mod fanout;
pub mod http;
pub mod hub;
pub mod lease;
pub mod log;
pub mod uplink;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tokio::time::Duration;

use carl_bridge::{LinkEnd, WanLinkConfig};

pub use config::ServerConfig;
pub use hub::{spawn_hub, HubConfig, HubHandle, HubSnapshot, LeaseAction, LeasePayload, LeaseRequest};
pub use lease::{audit_journal, JournalAudit, JournalEntry, LeaseTable, Role, SessionId};
pub use log::{query_log, LogRecord, TelemetryLog};
pub use uplink::{attach_bridge, UplinkSinks, UplinkStats};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("server configuration: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("telemetry log {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServerError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Bind { .. } => 3,
            _ => 1,
        }
    }
}

/// A started server. Dropping it does not stop it; call [`Server::shutdown`].
pub struct Server {
    pub http_addr: SocketAddr,
    pub hub: HubHandle,
    pub sinks: UplinkSinks,
    http: JoinHandle<()>,
    stop: Option<oneshot::Sender<()>>,
    bridge_listener: Option<JoinHandle<()>>,
}

impl Server {
    /// Bind the HTTP listener and start the hub. `robot` is served at
    /// `/api/robot`.
    pub async fn start(cfg: &ServerConfig, robot: Value, journal: bool) -> Result<Self, ServerError> {
        cfg.validate()?;
        let listener = TcpListener::bind(&cfg.listen).await.map_err(|source| ServerError::Bind {
            addr: cfg.listen.clone(),
            source,
        })?;
        let http_addr = listener.local_addr()?;
        let hub = spawn_hub(HubConfig {
            lease_timeout: Duration::from_secs_f64(cfg.lease_timeout_s),
            pending_timeout: Duration::from_secs_f64(cfg.pending_timeout_s),
            journal,
        });
        let log = Arc::new(TelemetryLog::open(&cfg.log_path)?);
        let sinks = UplinkSinks {
            hub: hub.clone(),
            fanout: Arc::default(),
            log,
            stats: Arc::default(),
        };
        let state = http::AppState {
            hub: hub.clone(),
            fanout: sinks.fanout.clone(),
            log: sinks.log.clone(),
            uplink: sinks.stats.clone(),
            robot: Arc::new(robot),
        };
        let app = http::router(state, &cfg.static_dir);
        let (stop, stopped) = oneshot::channel::<()>();
        let http = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = stopped.await;
            });
            if let Err(e) = serve.await {
                tracing::error!(error = %e, "http server failed");
            }
        });
        tracing::info!(%http_addr, "server listening");
        Ok(Self {
            http_addr,
            hub,
            sinks,
            http,
            stop: Some(stop),
            bridge_listener: None,
        })
    }

    /// Use an in-process link as the bridge connection.
    pub fn attach_bridge(&self, link: LinkEnd) -> JoinHandle<()> {
        attach_bridge(link, self.sinks.clone())
    }

    /// Accept bridge connections over TCP. Returns the bound address.
    pub async fn listen_for_bridges(&mut self, addr: &str, wan: Option<WanLinkConfig>) -> Result<SocketAddr, ServerError> {
        let listener = TcpListener::bind(addr).await.map_err(|source| ServerError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        let bound = listener.local_addr()?;
        self.bridge_listener = Some(uplink::accept_bridges(listener, wan, self.sinks.clone()));
        tracing::info!(%bound, "accepting bridge connections");
        Ok(bound)
    }

    pub fn log(&self) -> &Arc<TelemetryLog> {
        &self.sinks.log
    }

    /// Stop serving, then flush and close the log.
    pub async fn shutdown(mut self) {
        if let Some(l) = self.bridge_listener.take() {
            l.abort();
        }
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        // Open sockets keep graceful shutdown waiting; do not wait forever.
        if tokio::time::timeout(Duration::from_secs(1), &mut self.http).await.is_err() {
            self.http.abort();
        }
        let log = self.sinks.log.clone();
        let _ = tokio::task::spawn_blocking(move || log.close()).await;
    }
}
