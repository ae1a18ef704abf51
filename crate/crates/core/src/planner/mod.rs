//! Reference generation: operator deltas become trapezoidal motions, behavior
//! scripts become spline tracks. One planner instance owns the reference cell.

mod behavior;
mod spline;
mod trapezoid;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::{DVector, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use behavior::{load_behaviors, BehaviorScript, Channel, Waypoint};
use behavior::ChannelTrack;
pub use spline::{fit_natural_spline, CubicSpline};
pub use trapezoid::{plan_trapezoid, MotionLimits, TrapezoidProfile};

use crate::bus::{LatestTopic, QueuedTopic, TopicBus};
use crate::cell::LatestCell;
use crate::command::{Axis, CommandRecord, Mode, OperatorCommand, RobotEvent};
use crate::config::ControllerConfig;
use crate::controller::{ReferenceRecord, TaskKind};
use crate::kinematics::{JointState, Pose, RobotDescription, Snapshot};
use crate::periodic::{spawn_periodic, Cancel, PeriodicSpec, TimingLog};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlannerError {
    #[error("busy")]
    Busy,
    #[error("unknown effector '{0}'")]
    UnknownEffector(String),
    #[error("unknown behavior '{0}'")]
    UnknownBehavior(String),
    #[error("effector '{0}' has no gripper")]
    NoGripper(String),
    #[error("power is off")]
    PoweredOff,
    #[error("no joint state received yet")]
    NotReady,
    #[error("invalid trapezoid: {0}")]
    InvalidProfile(String),
    #[error("invalid spline: {0}")]
    InvalidSpline(String),
    #[error("invalid behavior script: {0}")]
    InvalidScript(String),
    #[error("{0}")]
    Io(String),
}

impl PlannerError {
    /// Short machine-readable reason carried in rejection events and acks.
    pub fn reason(&self) -> &'static str {
        match self {
            Self::Busy => "busy",
            Self::UnknownEffector(_) => "unknown effector",
            Self::UnknownBehavior(_) => "unknown behavior",
            Self::NoGripper(_) => "no gripper",
            Self::PoweredOff => "power_off",
            Self::NotReady => "not ready",
            Self::InvalidProfile(_) | Self::InvalidSpline(_) | Self::InvalidScript(_) | Self::Io(_) => "invalid",
        }
    }
}

/// Size of one operator button press.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// Meters.
    #[serde(default = "default_step_position")]
    pub position: f64,
    /// Radians.
    #[serde(default = "default_step_rotation")]
    pub rotation: f64,
}

fn default_step_position() -> f64 {
    0.02
}

fn default_step_rotation() -> f64 {
    0.1
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            position: default_step_position(),
            rotation: default_step_rotation(),
        }
    }
}

/// One delta press: a straight line (or a fixed-axis rotation) from `start`
/// to `goal`, timed by a trapezoid.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMotion {
    pub start: Pose,
    pub goal: Pose,
    pub mode: Mode,
    /// Signed unit direction in the base frame.
    pub direction: Vector3<f64>,
    pub profile: TrapezoidProfile,
}

impl DeltaMotion {
    pub fn duration(&self) -> f64 {
        self.profile.duration
    }

    /// Pose along the motion at `t` seconds after its start. Returns `goal`
    /// itself once the profile has finished.
    pub fn sample(&self, t: f64) -> Pose {
        if t >= self.profile.duration {
            return self.goal;
        }
        let (s, _) = self.profile.sample(t);
        match self.mode {
            Mode::Position => Pose::new(self.start.position + self.direction * s, self.start.orientation),
            Mode::Orientation => {
                let r = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(self.direction), s);
                Pose::new(self.start.position, r * self.start.orientation)
            }
        }
    }
}

/// New goal for one press plus the trapezoid that reaches it.
pub fn apply_delta(
    current: &Pose,
    mode: Mode,
    axis: Axis,
    dir: f64,
    steps: &StepConfig,
    limits: &MotionLimits,
) -> Result<DeltaMotion, PlannerError> {
    if dir != 1.0 && dir != -1.0 {
        return Err(PlannerError::InvalidProfile(format!("dir must be 1 or -1, got {dir}")));
    }
    let mut direction = Vector3::zeros();
    direction[axis.index()] = dir;
    let (goal, distance) = match mode {
        Mode::Position => {
            let mut p = current.position;
            p[axis.index()] += dir * steps.position;
            (Pose::new(p, current.orientation), steps.position)
        }
        Mode::Orientation => {
            let r = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(direction), steps.rotation);
            (Pose::new(current.position, r * current.orientation), steps.rotation)
        }
    };
    let profile = plan_trapezoid(distance, limits.vmax, limits.amax)?;
    Ok(DeltaMotion {
        start: *current,
        goal,
        mode,
        direction,
        profile,
    })
}

#[derive(Debug)]
struct ActiveDelta {
    effector: String,
    task: String,
    started: f64,
    motion: DeltaMotion,
}

#[derive(Debug)]
struct ActiveBehavior {
    name: String,
    started: f64,
    duration: f64,
    tracks: Vec<ChannelTrack>,
}

#[derive(Debug, Default)]
enum Activity {
    #[default]
    Idle,
    Delta(ActiveDelta),
    Behavior(ActiveBehavior),
}

/// Planner state machine. Commands arrive through `handle`, references leave
/// through `tick`; both take the caller's clock so the machine is testable
/// without threads.
pub struct Planner {
    desc: Arc<RobotDescription>,
    cfg: ControllerConfig,
    behaviors: HashMap<String, BehaviorScript>,
    goals: HashMap<String, Pose>,
    posture: DVector<f64>,
    grippers: Vec<f64>,
    powered: bool,
    ready: bool,
    selected_effector: String,
    selected_mode: Mode,
    activity: Activity,
    seq: u64,
    events: Vec<RobotEvent>,
}

impl Planner {
    pub fn new(
        desc: Arc<RobotDescription>,
        cfg: ControllerConfig,
        behaviors: HashMap<String, BehaviorScript>,
    ) -> Result<Self, PlannerError> {
        for script in behaviors.values() {
            script.validate()?;
            for ch in &script.channels {
                if cfg.task_for(&ch.frame, ch.kind).is_none() {
                    return Err(PlannerError::InvalidScript(format!(
                        "{}: no {:?} task controls frame '{}'",
                        script.name, ch.kind, ch.frame
                    )));
                }
            }
        }
        let selected_effector = cfg
            .effectors
            .keys()
            .find(|k| k.as_str() == "right")
            .or_else(|| cfg.effectors.keys().next())
            .cloned()
            .unwrap_or_default();
        let posture = cfg.home_posture(&desc);
        let grippers = desc.grippers.iter().map(|g| posture[g.joint_index]).collect();
        Ok(Self {
            desc,
            cfg,
            behaviors,
            goals: HashMap::new(),
            posture,
            grippers,
            powered: false,
            ready: false,
            selected_effector,
            selected_mode: Mode::Position,
            activity: Activity::Idle,
            seq: 0,
            events: Vec::new(),
        })
    }

    pub fn is_powered(&self) -> bool {
        self.powered
    }

    /// True while a delta motion or a behavior is streaming.
    pub fn is_busy(&self) -> bool {
        !matches!(self.activity, Activity::Idle)
    }

    pub fn active_behavior(&self) -> Option<&str> {
        match &self.activity {
            Activity::Behavior(b) => Some(&b.name),
            _ => None,
        }
    }

    pub fn selection(&self) -> (&str, Mode) {
        (&self.selected_effector, self.selected_mode)
    }

    /// Held goal of a task, if the planner has been anchored.
    pub fn goal(&self, task: &str) -> Option<&Pose> {
        self.goals.get(task)
    }

    pub fn behavior_names(&self) -> impl Iterator<Item = &str> {
        self.behaviors.keys().map(String::as_str)
    }

    pub fn take_events(&mut self) -> Vec<RobotEvent> {
        std::mem::take(&mut self.events)
    }

    /// Reset every Cartesian goal to the measured pose of its frame.
    pub fn anchor(&mut self, state: &JointState) -> Result<(), PlannerError> {
        let snap = Snapshot::new(&self.desc, &state.q).map_err(|e| PlannerError::Io(e.to_string()))?;
        for spec in &self.cfg.tasks {
            if spec.kind == TaskKind::Posture {
                continue;
            }
            let pose = snap.pose(&spec.frame).map_err(|e| PlannerError::Io(e.to_string()))?;
            self.goals.insert(spec.id.clone(), pose);
        }
        self.grippers = self.desc.grippers.iter().map(|g| state.q[g.joint_index]).collect();
        self.ready = true;
        Ok(())
    }

    fn effector_name(&self, effector: &Option<String>) -> Result<String, PlannerError> {
        let name = effector.clone().unwrap_or_else(|| self.selected_effector.clone());
        if self.cfg.effectors.contains_key(&name) {
            Ok(name)
        } else {
            Err(PlannerError::UnknownEffector(name))
        }
    }

    fn task_id(&self, effector: &str, kind: TaskKind) -> Result<String, PlannerError> {
        let frame = &self.cfg.effectors[effector].frame;
        self.cfg
            .task_for(frame, kind)
            .map(|t| t.id.clone())
            .ok_or_else(|| PlannerError::UnknownEffector(format!("{effector} has no {kind:?} task")))
    }

    /// Apply one command at time `now`. `state` is the latest measured state,
    /// used to anchor goals on power-on. Rejections are also queued as
    /// `CommandRejected` events.
    pub fn handle(&mut self, record: &CommandRecord, now: f64, state: Option<&JointState>) -> Result<(), PlannerError> {
        let out = self.dispatch(&record.command, now, state);
        if let Err(e) = &out {
            self.events.push(RobotEvent::CommandRejected {
                of_seq: record.origin_seq,
                reason: e.reason().to_string(),
            });
        }
        out
    }

    fn dispatch(&mut self, cmd: &OperatorCommand, now: f64, state: Option<&JointState>) -> Result<(), PlannerError> {
        match cmd {
            OperatorCommand::Power { on } => {
                self.halt();
                if let Some(s) = state {
                    self.anchor(s)?;
                } else if *on && !self.ready {
                    return Err(PlannerError::NotReady);
                }
                self.powered = *on;
                self.events.push(RobotEvent::Power { on: *on });
                Ok(())
            }
            OperatorCommand::Select { effector, mode } => {
                if effector.is_some() {
                    self.selected_effector = self.effector_name(effector)?;
                }
                if let Some(m) = mode {
                    self.selected_mode = *m;
                }
                Ok(())
            }
            OperatorCommand::Stop => {
                self.halt();
                Ok(())
            }
            OperatorCommand::Delta {
                effector,
                mode,
                axis,
                dir,
            } => {
                self.require_powered()?;
                let effector = self.effector_name(effector)?;
                if self.is_busy() {
                    return Err(PlannerError::Busy);
                }
                let mode = mode.unwrap_or(self.selected_mode);
                let (kind, limits) = match mode {
                    Mode::Position => (TaskKind::Position, self.cfg.planner.linear),
                    Mode::Orientation => (TaskKind::Orientation, self.cfg.planner.angular),
                };
                let task = self.task_id(&effector, kind)?;
                let current = self.goals[&task];
                let motion = apply_delta(&current, mode, *axis, *dir, &self.cfg.steps, &limits)?;
                self.activity = Activity::Delta(ActiveDelta {
                    effector,
                    task,
                    started: now,
                    motion,
                });
                Ok(())
            }
            OperatorCommand::Gripper { effector, open } => {
                self.require_powered()?;
                let effector = self.effector_name(effector)?;
                let gripper = self.cfg.effectors[&effector]
                    .gripper
                    .clone()
                    .ok_or_else(|| PlannerError::NoGripper(effector.clone()))?;
                let idx = self
                    .desc
                    .grippers
                    .iter()
                    .position(|g| g.name == gripper)
                    .ok_or_else(|| PlannerError::NoGripper(effector.clone()))?;
                self.grippers[idx] = if *open { 1.0 } else { 0.0 };
                Ok(())
            }
            OperatorCommand::Behavior { name } => {
                self.require_powered()?;
                let script = self
                    .behaviors
                    .get(name)
                    .ok_or_else(|| PlannerError::UnknownBehavior(name.clone()))?;
                if self.is_busy() {
                    return Err(PlannerError::Busy);
                }
                let mut tracks = Vec::with_capacity(script.channels.len());
                for ch in &script.channels {
                    let task = self
                        .cfg
                        .task_for(&ch.frame, ch.kind)
                        .map(|t| t.id.clone())
                        .ok_or_else(|| PlannerError::InvalidScript(format!("no task for frame '{}'", ch.frame)))?;
                    let start = self.goals[&task];
                    tracks.push(match ch.kind {
                        TaskKind::Position => ChannelTrack::position(&task, start.position, ch)?,
                        _ => ChannelTrack::orientation(&task, start.orientation, ch)?,
                    });
                }
                let name = script.name.clone();
                self.activity = Activity::Behavior(ActiveBehavior {
                    name: name.clone(),
                    started: now,
                    duration: script.duration,
                    tracks,
                });
                self.events.push(RobotEvent::BehaviorStarted { name });
                Ok(())
            }
        }
    }

    fn require_powered(&self) -> Result<(), PlannerError> {
        if !self.powered {
            Err(PlannerError::PoweredOff)
        } else if !self.ready {
            Err(PlannerError::NotReady)
        } else {
            Ok(())
        }
    }

    /// Abandon the current activity, holding the last streamed references.
    fn halt(&mut self) {
        if let Activity::Behavior(b) = std::mem::take(&mut self.activity) {
            self.events.push(RobotEvent::BehaviorStopped { name: b.name });
        }
    }

    /// Advance the active motion to `now` and produce the next reference.
    /// Returns `None` while powered off or before the first anchor.
    pub fn tick(&mut self, now: f64) -> Option<ReferenceRecord> {
        match std::mem::take(&mut self.activity) {
            Activity::Idle => {}
            Activity::Delta(d) => {
                let t = now - d.started;
                self.goals.insert(d.task.clone(), d.motion.sample(t));
                if t >= d.motion.duration() {
                    self.events.push(RobotEvent::MotionComplete { effector: d.effector });
                } else {
                    self.activity = Activity::Delta(d);
                }
            }
            Activity::Behavior(b) => {
                let t = (now - b.started).min(b.duration);
                for track in &b.tracks {
                    let goal = self.goals.get_mut(track.task()).expect("track tasks are anchored");
                    if let Some(p) = track.sample_position(t) {
                        goal.position = p;
                    }
                    if let Some(q) = track.sample_orientation(t) {
                        goal.orientation = crate::kinematics::canonical(q);
                    }
                }
                if now - b.started >= b.duration {
                    self.events.push(RobotEvent::BehaviorComplete { name: b.name });
                } else {
                    self.activity = Activity::Behavior(b);
                }
            }
        }
        if !(self.powered && self.ready) {
            return None;
        }
        self.seq += 1;
        Some(ReferenceRecord {
            seq: self.seq,
            t: now,
            goals: self.goals.clone(),
            posture: Some(self.posture.clone()),
            grippers: self.grippers.clone(),
        })
    }
}

/// Flags the planner thread shares with the command path.
#[derive(Debug, Clone, Default)]
pub struct PlannerFlags {
    pub busy: Arc<AtomicBool>,
    pub powered: Arc<AtomicBool>,
}

/// Handles the planner thread reads from and writes to.
pub struct PlannerIo {
    pub bus: Arc<TopicBus>,
    pub joint_states: Arc<LatestTopic<JointState>>,
    pub commands: Arc<QueuedTopic<CommandRecord>>,
    pub events: Arc<QueuedTopic<RobotEvent>>,
    pub reference: Arc<LatestCell<ReferenceRecord>>,
    pub flags: PlannerFlags,
}

/// Run `planner` on its own executor at the configured rate.
pub fn run_planner(
    mut planner: Planner,
    io: PlannerIo,
    cancel: Cancel,
    timing: Option<Arc<TimingLog>>,
) -> std::io::Result<std::thread::JoinHandle<()>> {
    let spec = PeriodicSpec {
        name: "planner".into(),
        frequency: planner.cfg.planner.rate,
        rt_priority: None,
        spin: std::time::Duration::ZERO,
    };
    spawn_periodic(spec, cancel, timing, move |_| {
        let now = io.bus.now();
        let state = io.joint_states.latest();
        let state = state.as_ref().map(|s| &s.value);
        if !planner.ready {
            if let Some(s) = state {
                if let Err(e) = planner.anchor(s) {
                    tracing::warn!(error = %e, "planner could not anchor to joint state");
                }
            }
        }
        for rec in io.commands.drain() {
            if let Err(e) = planner.handle(&rec.value, now, state) {
                tracing::debug!(seq = rec.value.origin_seq, error = %e, "command rejected by planner");
            }
        }
        if let Some(reference) = planner.tick(now) {
            io.reference.write(reference);
        }
        io.flags.busy.store(planner.is_busy(), Ordering::Release);
        io.flags.powered.store(planner.is_powered(), Ordering::Release);
        for event in planner.take_events() {
            io.events.publish(event);
        }
    })
}
