//! Headless scenarios: a scripted operator drives the full stack through the
//! web portal and the final robot state is checked against expectations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tokio::time::{Duration, Instant};

use carl_bridge::TelemetryPayload;
use carl_core::command::{CommandKind, CommandPayload, RobotEvent};
use carl_core::config::ControllerConfig;
use carl_core::sim::ObjectDoc;

use crate::client::{ClientView, OperatorClient};
use crate::error::CliError;
use crate::stack::LoadedRobot;

fn default_repeat() -> u32 {
    1
}

fn default_timeout() -> f64 {
    120.0
}

fn default_settle() -> f64 {
    1.0
}

/// One scripted operator action, sent `repeat` times with stop-and-wait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    /// Earliest send time, seconds after the first telemetry frame. The
    /// step still waits for the previous one to complete.
    #[serde(default)]
    pub t: f64,
    pub command: CommandPayload,
    #[serde(default = "default_repeat")]
    pub repeat: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    /// The first scene object is held by gripper `to`.
    Attached { to: String },
    /// `frame` ended within `tol` meters of its starting position plus
    /// `offset`.
    FrameNear { frame: String, offset: [f64; 3], tol: f64 },
    /// Every joint within `tol` radians of its starting value.
    AtHome { tol: f64 },
    /// Every controller task error norm at or below `max`.
    ErrorBelow { max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Quiet time after the last step before expectations are checked.
    #[serde(default = "default_settle")]
    pub settle_s: f64,
    /// Replaces the scene's objects for this run.
    #[serde(default)]
    pub objects: Option<Vec<ObjectDoc>>,
    pub steps: Vec<Step>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

impl Scenario {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let s: Self = serde_json::from_str(text).map_err(|e| CliError::config(origin, e))?;
        if !(s.timeout_s > 0.0 && s.settle_s >= 0.0) {
            return Err(CliError::config(origin, "timeout_s must be positive and settle_s non-negative"));
        }
        let mut last = 0.0;
        for step in &s.steps {
            step.command.to_command().map_err(|e| CliError::config(origin, e))?;
            if !(step.t.is_finite() && step.t >= last) {
                return Err(CliError::config(origin, "step times must be non-decreasing and non-negative"));
            }
            last = step.t;
        }
        Ok(s)
    }

    /// Check that every expectation names something the robot has.
    pub fn check_against(&self, robot: &LoadedRobot, origin: &Path) -> Result<(), CliError> {
        for exp in &self.expect {
            match exp {
                Expectation::Attached { to } if robot.desc.gripper(to).is_none() => {
                    return Err(CliError::config(origin, format!("unknown gripper '{to}'")));
                }
                Expectation::FrameNear { frame, .. } if !robot.desc.has_frame(frame) => {
                    return Err(CliError::config(origin, format!("unknown frame '{frame}'")));
                }
                Expectation::Attached { .. } => {
                    let objects = self.objects.as_ref().unwrap_or(&robot.scene.objects);
                    if objects.is_empty() {
                        return Err(CliError::config(origin, "attachment expected but the scene has no objects"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `name` is a path to a JSON file or a file stem under `dir`.
    pub fn find(name: &str, dir: &Path) -> Result<(Self, PathBuf), CliError> {
        let direct = PathBuf::from(name);
        let path = if direct.extension().is_some() || direct.components().count() > 1 {
            direct
        } else {
            dir.join(format!("{name}.json"))
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::config(&path, e))?;
        Ok((Self::parse(&text, &path)?, path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub expectation: Expectation,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub passed: bool,
    pub elapsed_s: f64,
    pub commands_sent: u64,
    pub checks: Vec<CheckResult>,
    /// Set when the run stopped before the checks.
    pub error: Option<String>,
    /// Command round trips, milliseconds, in send order.
    pub rtt_ms: Vec<f64>,
    pub telemetry_received: u64,
}

/// Check `exp` against the first and latest telemetry frames.
pub fn evaluate(exp: &Expectation, first: &TelemetryPayload, last: &TelemetryPayload) -> CheckResult {
    let (passed, detail) = match exp {
        Expectation::Attached { to } => (
            last.attached.as_deref() == Some(to.as_str()),
            format!("object held by {}", last.attached.as_deref().unwrap_or("nothing")),
        ),
        Expectation::FrameNear { frame, offset, tol } => match (first.effectors.get(frame), last.effectors.get(frame)) {
            (Some(a), Some(b)) => {
                let err = (0..3)
                    .map(|i| (b.p[i] - (a.p[i] + offset[i])).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (err <= *tol, format!("{frame} is {err:.4} m from target"))
            }
            _ => (false, format!("frame {frame} missing from telemetry")),
        },
        Expectation::AtHome { tol } => {
            let dev = first
                .q
                .iter()
                .zip(&last.q)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            (dev <= *tol && first.q.len() == last.q.len(), format!("max joint deviation {dev:.2e} rad"))
        }
        Expectation::ErrorBelow { max } => {
            let worst = last.status.error_norms.iter().copied().fold(0.0, f64::max);
            (worst <= *max, format!("largest task error {worst:.2e}"))
        }
    };
    CheckResult {
        expectation: exp.clone(),
        passed,
        detail,
    }
}

/// Longest wait for one command's completion signal.
const STEP_LIMIT: Duration = Duration::from_secs(30);

/// Aperture distance at which a gripper counts as settled.
const APERTURE_TOL: f64 = 0.01;

/// Drive `scenario` through the portal at `ws_url`.
pub async fn run_scenario(scenario: &Scenario, ws_url: &str, controller: &ControllerConfig) -> ScenarioOutcome {
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(scenario.timeout_s);
    let mut outcome = ScenarioOutcome {
        name: scenario.name.clone(),
        passed: false,
        elapsed_s: 0.0,
        commands_sent: 0,
        checks: Vec::new(),
        error: None,
        rtt_ms: Vec::new(),
        telemetry_received: 0,
    };
    let result = drive(scenario, ws_url, controller, deadline, &mut outcome).await;
    outcome.elapsed_s = start.elapsed().as_secs_f64();
    match result {
        Ok(checks) => {
            outcome.passed = checks.iter().all(|c| c.passed);
            outcome.checks = checks;
        }
        Err(e) => outcome.error = Some(e.to_string()),
    }
    outcome
}

async fn drive(
    scenario: &Scenario,
    ws_url: &str,
    controller: &ControllerConfig,
    deadline: Instant,
    outcome: &mut ScenarioOutcome,
) -> Result<Vec<CheckResult>, CliError> {
    let mut client = OperatorClient::connect(ws_url).await?;
    client.acquire_lease(deadline).await?;
    if !client.until(deadline, |v| v.telemetry.is_some()).await? {
        return Err(CliError::ScenarioFailed("no telemetry before the deadline".into()));
    }
    let origin = Instant::now();
    for step in &scenario.steps {
        let not_before = origin + Duration::from_secs_f64(step.t);
        if not_before > deadline {
            return Err(CliError::ScenarioFailed("timed out".into()));
        }
        client.until(not_before, |_| false).await?;
        for _ in 0..step.repeat {
            let events_before = client.view.events.len();
            let (ack, rtt) = client.command(&step.command, deadline).await?;
            outcome.commands_sent += 1;
            outcome.rtt_ms.push(rtt.as_secs_f64() * 1000.0);
            if !ack.is_accepted() {
                return Err(CliError::ScenarioFailed(format!(
                    "command {:?} rejected: {}",
                    step.command.kind,
                    ack.reason.unwrap_or_default()
                )));
            }
            let done = completion(&step.command, controller, events_before);
            let limit = deadline.min(Instant::now() + STEP_LIMIT);
            if !client.until(limit, done).await? {
                return Err(CliError::ScenarioFailed(format!(
                    "command {:?} did not complete in time",
                    step.command.kind
                )));
            }
        }
    }
    let settle = Instant::now() + Duration::from_secs_f64(scenario.settle_s);
    if settle > deadline {
        return Err(CliError::ScenarioFailed("timed out".into()));
    }
    client.until(settle, |_| false).await?;
    outcome.telemetry_received = client.view.telemetry_count;
    let (Some(first), Some(last)) = (&client.view.first_telemetry, &client.view.telemetry) else {
        return Err(CliError::ScenarioFailed("no telemetry".into()));
    };
    let checks = scenario.expect.iter().map(|e| evaluate(e, first, last)).collect();
    client.close().await;
    Ok(checks)
}

/// Predicate that holds once the robot has finished acting on `cmd`.
fn completion<'a>(
    cmd: &'a CommandPayload,
    controller: &'a ControllerConfig,
    events_before: usize,
) -> impl FnMut(&ClientView) -> bool + 'a {
    let gripper = cmd
        .effector
        .as_ref()
        .and_then(|e| controller.effectors.get(e))
        .and_then(|e| e.gripper.clone());
    move |v: &ClientView| {
        let new_events = &v.events[events_before.min(v.events.len())..];
        match cmd.kind {
            CommandKind::Power => {
                let on = cmd.action.as_deref() == Some("on");
                new_events.iter().any(|e| matches!(e, RobotEvent::Power { on: o } if *o == on))
            }
            CommandKind::Delta => new_events.iter().any(|e| {
                matches!(e, RobotEvent::MotionComplete { effector } if cmd.effector.as_deref().is_none_or(|c| c == effector))
            }),
            CommandKind::Behavior => new_events.iter().any(|e| {
                matches!(e, RobotEvent::BehaviorComplete { name } | RobotEvent::BehaviorStopped { name }
                    if Some(name.as_str()) == cmd.name.as_deref())
            }),
            CommandKind::Gripper => {
                let target = if cmd.action.as_deref() == Some("open") { 1.0 } else { 0.0 };
                match (&gripper, &v.telemetry) {
                    (Some(g), Some(t)) => t.grippers.get(g).is_some_and(|a| (a - target).abs() <= APERTURE_TOL),
                    _ => true,
                }
            }
            CommandKind::Select | CommandKind::Stop => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use carl_bridge::envelope::FramePose;
    use std::collections::BTreeMap;

    fn frame(p: [f64; 3], q: Vec<f64>, attached: Option<&str>) -> TelemetryPayload {
        TelemetryPayload {
            sample_t: 0.0,
            q,
            effectors: BTreeMap::from([("palm".to_string(), FramePose { p, quat: [1.0, 0.0, 0.0, 0.0] })]),
            grippers: BTreeMap::new(),
            object: None,
            attached: attached.map(str::to_string),
            status: Default::default(),
        }
    }

    #[test]
    fn frame_near_uses_offset_from_start() {
        let a = frame([0.0, 0.0, 1.0], vec![0.0], None);
        let b = frame([0.0, 0.27, 1.0], vec![0.0], None);
        let exp = Expectation::FrameNear {
            frame: "palm".into(),
            offset: [0.0, 0.28, 0.0],
            tol: 0.05,
        };
        assert!(evaluate(&exp, &a, &b).passed);
        let exp = Expectation::FrameNear {
            frame: "palm".into(),
            offset: [0.0, -0.28, 0.0],
            tol: 0.05,
        };
        assert!(!evaluate(&exp, &a, &b).passed);
    }

    #[test]
    fn attachment_and_home() {
        let a = frame([0.0; 3], vec![0.1, 0.2], None);
        let b = frame([0.0; 3], vec![0.1, 0.2005], Some("left"));
        assert!(evaluate(&Expectation::Attached { to: "left".into() }, &a, &b).passed);
        assert!(!evaluate(&Expectation::Attached { to: "right".into() }, &a, &b).passed);
        assert!(evaluate(&Expectation::AtHome { tol: 1e-3 }, &a, &b).passed);
        assert!(!evaluate(&Expectation::AtHome { tol: 1e-4 }, &a, &b).passed);
    }

    #[test]
    fn scenario_documents_are_strict() {
        let ok = r#"{"name":"n","steps":[{"command":{"kind":"power","action":"on"}}],"expect":[{"kind":"at_home","tol":0.01}]}"#;
        let s = Scenario::parse(ok, Path::new("n.json")).unwrap();
        assert_eq!(s.steps[0].repeat, 1);
        assert_eq!(s.timeout_s, 120.0);
        let bad = r#"{"name":"n","steps":[{"command":{"kind":"delta","axis":"x","dir":3}}]}"#;
        assert_eq!(Scenario::parse(bad, Path::new("n.json")).unwrap_err().exit_code(), 2);
        let extra = r#"{"name":"n","steps":[],"bogus":1}"#;
        assert!(Scenario::parse(extra, Path::new("n.json")).is_err());
        let backwards = r#"{"name":"n","steps":[{"t":2,"command":{"kind":"stop"}},{"t":1,"command":{"kind":"stop"}}]}"#;
        assert!(Scenario::parse(backwards, Path::new("n.json")).is_err());
    }
}
