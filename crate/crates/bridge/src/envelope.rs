//! The single wire message type shared by bridge, server and browser.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use carl_core::command::CommandPayload;
use carl_core::controller::ControllerStatus;

pub const PROTOCOL_VERSION: u32 = 1;

pub const TELEMETRY_TOPIC: &str = "/joint_states";
pub const COMMAND_TOPIC: &str = "/operator_cmds";
pub const EVENT_TOPIC: &str = "/events";
pub const LEASE_TOPIC: &str = "/lease";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeType {
    Telemetry,
    Command,
    Ack,
    Event,
    Lease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: EnvelopeType,
    pub topic: String,
    pub seq: u64,
    /// Seconds since the sender's session started.
    pub t: f64,
    pub payload: Value,
}

/// Why an inbound text frame could not be used.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodeError {
    /// Not JSON, or not an envelope. `seq` is recovered when present.
    Malformed { seq: Option<u64>, detail: String },
    Version { seq: Option<u64>, found: Value },
}

impl DecodeError {
    pub fn seq(&self) -> Option<u64> {
        match self {
            Self::Malformed { seq, .. } | Self::Version { seq, .. } => *seq,
        }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            Self::Malformed { .. } => "malformed",
            Self::Version { .. } => "unsupported version",
        }
    }
}

impl Envelope {
    pub fn new(kind: EnvelopeType, topic: &str, seq: u64, t: f64, payload: Value) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            kind,
            topic: topic.to_string(),
            seq,
            t,
            payload,
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("envelopes always serialize")
    }

    /// Parse a text frame. The version is checked before the rest of the
    /// structure so that future versions get a precise rejection.
    pub fn parse(text: &str) -> Result<Self, DecodeError> {
        let value: Value = serde_json::from_str(text).map_err(|e| DecodeError::Malformed {
            seq: None,
            detail: e.to_string(),
        })?;
        let seq = value.get("seq").and_then(Value::as_u64);
        match value.get("v") {
            Some(v) if v.as_u64() == Some(PROTOCOL_VERSION as u64) => {}
            Some(v) => return Err(DecodeError::Version { seq, found: v.clone() }),
            None => {
                return Err(DecodeError::Malformed {
                    seq,
                    detail: "missing field `v`".into(),
                })
            }
        }
        serde_json::from_value(value).map_err(|e| DecodeError::Malformed {
            seq,
            detail: e.to_string(),
        })
    }

    pub fn command(seq: u64, t: f64, payload: &CommandPayload) -> Self {
        Self::new(
            EnvelopeType::Command,
            COMMAND_TOPIC,
            seq,
            t,
            serde_json::to_value(payload).expect("command payloads serialize"),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckPayload {
    pub of_seq: u64,
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl AckPayload {
    pub fn accepted(of_seq: u64) -> Self {
        Self {
            of_seq,
            status: AckStatus::Accepted,
            reason: None,
        }
    }

    pub fn rejected(of_seq: u64, reason: impl Into<String>) -> Self {
        Self {
            of_seq,
            status: AckStatus::Rejected,
            reason: Some(reason.into()),
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == AckStatus::Accepted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub p: [f64; 3],
    /// `[w, x, y, z]`, w >= 0.
    pub quat: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatusPayload {
    #[serde(default)]
    pub reference_seq: Option<u64>,
    #[serde(default)]
    pub active: Vec<String>,
    #[serde(default)]
    pub error_norms: Vec<f64>,
    #[serde(default)]
    pub scale: f64,
    #[serde(default)]
    pub truncated: bool,
    #[serde(default)]
    pub fault: Option<String>,
}

impl From<&ControllerStatus> for StatusPayload {
    fn from(s: &ControllerStatus) -> Self {
        Self {
            reference_seq: s.reference_seq,
            active: s.active.clone(),
            error_norms: s.error_norms.clone(),
            scale: s.scale,
            truncated: s.truncated,
            fault: s.fault.clone(),
        }
    }
}

/// One throttled robot-state sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPayload {
    /// Plant time of the joint sample.
    pub sample_t: f64,
    pub q: Vec<f64>,
    /// Pose per named frame, composed from `q` at send time.
    pub effectors: BTreeMap<String, FramePose>,
    /// Aperture per gripper name.
    pub grippers: BTreeMap<String, f64>,
    /// Position of the first scene object, if any.
    #[serde(default)]
    pub object: Option<[f64; 3]>,
    /// Gripper holding that object.
    #[serde(default)]
    pub attached: Option<String>,
    #[serde(default)]
    pub status: StatusPayload,
}
