//! The server end of the bridge link: telemetry goes to fan-out and the log,
//! acks and events go to the hub.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use carl_bridge::{tcp_link, Envelope, EnvelopeType, LinkEnd, WanLinkConfig};

use crate::fanout::Fanout;
use crate::hub::HubHandle;
use crate::log::TelemetryLog;

static NEXT_LINK: AtomicU64 = AtomicU64::new(1);

/// Counters for frames arriving from the bridge.
#[derive(Debug, Default)]
pub struct UplinkStats {
    pub telemetry: AtomicU64,
    pub acks: AtomicU64,
    pub events: AtomicU64,
    pub undecodable: AtomicU64,
}

#[derive(Clone)]
pub struct UplinkSinks {
    pub hub: HubHandle,
    pub fanout: Arc<Fanout>,
    pub log: Arc<TelemetryLog>,
    pub stats: Arc<UplinkStats>,
}

/// Serve `link` as the current bridge until it closes. A newer link
/// replaces an older one for outbound commands.
pub fn attach_bridge(link: LinkEnd, sinks: UplinkSinks) -> JoinHandle<()> {
    let id = NEXT_LINK.fetch_add(1, Ordering::Relaxed);
    let LinkEnd { tx, mut rx } = link;
    sinks.hub.bridge_attached(id, tx);
    tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            let env = match Envelope::parse(&text) {
                Ok(env) => env,
                Err(e) => {
                    sinks.stats.undecodable.fetch_add(1, Ordering::Relaxed);
                    tracing::warn!(reason = e.reason(), "undecodable frame from bridge");
                    continue;
                }
            };
            match env.kind {
                EnvelopeType::Telemetry => {
                    sinks.stats.telemetry.fetch_add(1, Ordering::AcqRel);
                    sinks.log.append(&env.topic, env.seq, env.payload);
                    sinks.fanout.publish(Arc::from(text));
                }
                EnvelopeType::Ack => {
                    sinks.stats.acks.fetch_add(1, Ordering::AcqRel);
                    sinks.hub.from_bridge(env);
                }
                EnvelopeType::Event => {
                    sinks.stats.events.fetch_add(1, Ordering::AcqRel);
                    sinks.hub.from_bridge(env);
                }
                other => tracing::debug!(kind = ?other, "ignoring frame from bridge"),
            }
        }
        sinks.hub.bridge_detached(id);
    })
}

/// Accept bridge connections on `listener` until the task is aborted.
pub fn accept_bridges(listener: TcpListener, wan: Option<WanLinkConfig>, sinks: UplinkSinks) -> JoinHandle<()> {
    tokio::spawn(async move {
        loop {
            match listener.accept().await {
                Ok((stream, peer)) => match tcp_link(stream, wan) {
                    Ok(link) => {
                        tracing::info!(%peer, "bridge connected");
                        attach_bridge(link, sinks.clone());
                    }
                    Err(e) => tracing::warn!(%peer, error = %e, "bridge link setup failed"),
                },
                Err(e) => {
                    tracing::warn!(error = %e, "bridge accept failed");
                    tokio::time::sleep(std::time::Duration::from_millis(100)).await;
                }
            }
        }
    })
}
