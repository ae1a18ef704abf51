//! Operator command payloads and robot events, shared by the planner, the
//! bridge and the server.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Power,
    Select,
    Delta,
    Gripper,
    Behavior,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Position,
    Orientation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Wire form of a command, exactly as it appears in an envelope payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandPayload {
    pub kind: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// A structurally valid command. Effector and behavior names are not checked
/// against any robot here.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorCommand {
    Power { on: bool },
    Select { effector: Option<String>, mode: Option<Mode> },
    Delta { effector: Option<String>, mode: Option<Mode>, axis: Axis, dir: f64 },
    Gripper { effector: Option<String>, open: bool },
    Behavior { name: String },
    Stop,
}

impl CommandPayload {
    pub fn new(kind: CommandKind) -> Self {
        Self {
            kind,
            effector: None,
            mode: None,
            axis: None,
            dir: None,
            action: None,
            name: None,
        }
    }

    pub fn power(on: bool) -> Self {
        Self {
            action: Some(if on { "on" } else { "off" }.into()),
            ..Self::new(CommandKind::Power)
        }
    }

    pub fn delta(effector: &str, mode: Mode, axis: Axis, dir: i64) -> Self {
        Self {
            effector: Some(effector.into()),
            mode: Some(mode),
            axis: Some(axis),
            dir: Some(dir),
            ..Self::new(CommandKind::Delta)
        }
    }

    pub fn gripper(effector: &str, open: bool) -> Self {
        Self {
            effector: Some(effector.into()),
            action: Some(if open { "open" } else { "close" }.into()),
            ..Self::new(CommandKind::Gripper)
        }
    }

    pub fn behavior(name: &str) -> Self {
        Self {
            name: Some(name.into()),
            ..Self::new(CommandKind::Behavior)
        }
    }

    /// Structural check; the error string is a short human-readable reason.
    pub fn to_command(&self) -> Result<OperatorCommand, String> {
        let effector = self.effector.clone();
        match self.kind {
            CommandKind::Power => match self.action.as_deref() {
                Some("on") => Ok(OperatorCommand::Power { on: true }),
                Some("off") => Ok(OperatorCommand::Power { on: false }),
                _ => Err("power requires action \"on\" or \"off\"".into()),
            },
            CommandKind::Select => {
                if effector.is_none() && self.mode.is_none() {
                    return Err("select requires effector or mode".into());
                }
                Ok(OperatorCommand::Select {
                    effector,
                    mode: self.mode,
                })
            }
            CommandKind::Delta => {
                let axis = self.axis.ok_or("delta requires axis")?;
                let dir = match self.dir {
                    Some(1) => 1.0,
                    Some(-1) => -1.0,
                    _ => return Err("delta requires dir 1 or -1".into()),
                };
                Ok(OperatorCommand::Delta {
                    effector,
                    mode: self.mode,
                    axis,
                    dir,
                })
            }
            CommandKind::Gripper => match self.action.as_deref() {
                Some("open") => Ok(OperatorCommand::Gripper { effector, open: true }),
                Some("close") => Ok(OperatorCommand::Gripper { effector, open: false }),
                _ => Err("gripper requires action \"open\" or \"close\"".into()),
            },
            CommandKind::Behavior => match &self.name {
                Some(name) if !name.is_empty() => Ok(OperatorCommand::Behavior { name: name.clone() }),
                _ => Err("behavior requires name".into()),
            },
            CommandKind::Stop => Ok(OperatorCommand::Stop),
        }
    }
}

/// Record carried on the queued command topic.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandRecord {
    /// Sequence number of the envelope that delivered the command.
    pub origin_seq: u64,
    pub command: OperatorCommand,
}

/// Robot-side notifications sent upstream as event envelopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RobotEvent {
    BehaviorStarted { name: String },
    BehaviorComplete { name: String },
    BehaviorStopped { name: String },
    MotionComplete { effector: String },
    CommandRejected { of_seq: u64, reason: String },
    Power { on: bool },
    ConstraintsUpdated { independent_joints: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<OperatorCommand, String> {
        serde_json::from_str::<CommandPayload>(text)
            .map_err(|e| e.to_string())
            .and_then(|p| p.to_command())
    }

    #[test]
    fn delta_round_trip() {
        let p = CommandPayload::delta("right", Mode::Position, Axis::X, 1);
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(
            text,
            r#"{"kind":"delta","effector":"right","mode":"position","axis":"x","dir":1}"#
        );
        assert_eq!(
            parse(&text).unwrap(),
            OperatorCommand::Delta {
                effector: Some("right".into()),
                mode: Some(Mode::Position),
                axis: Axis::X,
                dir: 1.0
            }
        );
    }

    #[test]
    fn structural_rejections() {
        assert!(parse(r#"{"kind":"delta","axis":"x","dir":2}"#).is_err());
        assert!(parse(r#"{"kind":"delta","axis":"w","dir":1}"#).is_err());
        assert!(parse(r#"{"kind":"gripper","action":"squeeze"}"#).is_err());
        assert!(parse(r#"{"kind":"behavior"}"#).is_err());
        assert!(parse(r#"{"kind":"fly"}"#).is_err());
        assert!(parse(r#"{"kind":"stop","extra":1}"#).is_err());
        assert!(parse(r#"{"kind":"power"}"#).is_err());
    }

    #[test]
    fn effector_is_free_text() {
        // Unknown effectors pass the structural check; the bridge rejects them.
        assert!(parse(r#"{"kind":"gripper","effector":"tail","action":"open"}"#).is_ok());
    }

    #[test]
    fn event_shape() {
        let e = RobotEvent::BehaviorComplete { name: "wave".into() };
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"event":"behavior_complete","name":"wave"}"#
        );
    }
}
