//! Robot-side bridge between the local bus and the globally routable link.

pub mod envelope;
pub mod link;
pub mod runtime;
pub mod telemetry;
pub mod throttle;
pub mod wan;

use thiserror::Error;

pub use envelope::{AckPayload, AckStatus, Envelope, EnvelopeType, TelemetryPayload, PROTOCOL_VERSION};
pub use link::{link_pair, tcp_link, wan_link_pair, LinkEnd};
pub use runtime::{Bridge, BridgeConfig, BridgeStats, CommandValidator, RobotPorts, StatsSnapshot};
pub use throttle::{Throttle, ThrottlePolicy};
pub use wan::{wan_channel, wan_emulate, WanLinkConfig, WanSchedule};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("bridge configuration: {0}")]
    Config(String),
    #[error("link: {0}")]
    Link(#[from] std::io::Error),
}
