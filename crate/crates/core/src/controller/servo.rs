use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{resolve_coupled, CompoundTask, ConstraintSet, ControllerError, Coupled, Task, TaskGoal, TaskKind};
use crate::bus::LatestTopic;
use crate::cell::LatestCell;
use crate::kinematics::{JointState, Pose, RobotDescription};
use crate::periodic::{spawn_periodic, Cancel, PeriodicSpec, TimingLog};
use crate::sim::HalEndpoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoConfig {
    /// Hz.
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Fraction of each joint's velocity limit the controller may use.
    #[serde(default = "default_speed_scale")]
    pub speed_scale: f64,
    /// Microseconds of each period spent busy-waiting for the deadline.
    #[serde(default = "default_spin_us")]
    pub spin_us: f64,
}

fn default_frequency() -> f64 {
    1000.0
}

fn default_damping() -> f64 {
    1e-3
}

fn default_speed_scale() -> f64 {
    1.0
}

fn default_spin_us() -> f64 {
    150.0
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            frequency: default_frequency(),
            damping: default_damping(),
            speed_scale: default_speed_scale(),
            spin_us: default_spin_us(),
        }
    }
}

impl ServoConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(ControllerError::InvalidCompound("servo frequency must be positive".into()));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(ControllerError::InvalidCompound("damping must be non-negative".into()));
        }
        if !(self.speed_scale > 0.0 && self.speed_scale <= 1.0) {
            return Err(ControllerError::InvalidCompound("speed_scale must be in (0, 1]".into()));
        }
        if !(self.spin_us >= 0.0 && self.spin_us * 1e-6 < 1.0 / self.frequency) {
            return Err(ControllerError::InvalidCompound("spin_us must be non-negative and below the period".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(1.0 / self.frequency)
    }
}

/// Next command for the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCommand {
    pub t: f64,
    /// Full joint space, rad/s.
    pub qdot_cmd: DVector<f64>,
    /// Target aperture per gripper, in description order.
    pub gripper_cmd: Vec<f64>,
}

impl JointCommand {
    pub fn zero(t: f64, joints: usize, gripper_cmd: Vec<f64>) -> Self {
        Self {
            t,
            qdot_cmd: DVector::zeros(joints),
            gripper_cmd,
        }
    }
}

/// Configuration-level description of one task; goals arrive separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    #[serde(default)]
    pub frame: String,
    pub priority: u32,
    pub gain: f64,
}

/// The planner's latest references, read by the servo loop every cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRecord {
    pub seq: u64,
    pub t: f64,
    /// Cartesian goals keyed by task id.
    pub goals: HashMap<String, Pose>,
    /// Full-length joint vector; the servo extracts the independent entries.
    pub posture: Option<DVector<f64>>,
    /// Target aperture per gripper.
    pub grippers: Vec<f64>,
}

/// Per-cycle controller diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerStatus {
    pub t: f64,
    pub reference_seq: Option<u64>,
    pub active: Vec<String>,
    pub error_norms: Vec<f64>,
    pub scale: f64,
    pub truncated: bool,
    pub fault: Option<String>,
}

/// Resolves references into joint commands for one robot.
pub struct Servo {
    desc: Arc<RobotDescription>,
    cfg: ServoConfig,
    specs: Vec<TaskSpec>,
    constraints: ConstraintSet,
    coupled: Coupled,
}

impl Servo {
    pub fn new(
        desc: Arc<RobotDescription>,
        cfg: ServoConfig,
        mut specs: Vec<TaskSpec>,
        constraints: ConstraintSet,
    ) -> Result<Self, ControllerError> {
        cfg.validate()?;
        specs.sort_by_key(|s| s.priority);
        // Validate the ordering rules once with placeholder goals.
        let coupled = constraints.coupling_matrix(&desc)?;
        let placeholder: Vec<Task> = specs
            .iter()
            .map(|s| placeholder_task(s, coupled.independent.len()))
            .collect();
        for t in &placeholder {
            t.check(&desc, coupled.independent.len())?;
        }
        CompoundTask::new(placeholder)?;
        Ok(Self {
            desc,
            cfg,
            specs,
            constraints,
            coupled,
        })
    }

    pub fn description(&self) -> &Arc<RobotDescription> {
        &self.desc
    }

    pub fn config(&self) -> &ServoConfig {
        &self.cfg
    }

    pub fn specs(&self) -> &[TaskSpec] {
        &self.specs
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn coupled(&self) -> &Coupled {
        &self.coupled
    }

    /// Swap in a new constraint set. On error the previous set stays active.
    pub fn set_constraints(&mut self, constraints: ConstraintSet) -> Result<(), ControllerError> {
        let coupled = constraints.coupling_matrix(&self.desc)?;
        self.constraints = constraints;
        self.coupled = coupled;
        Ok(())
    }

    /// Tasks that have a goal in `reference`, in priority order.
    pub fn compound_task(&self, reference: &ReferenceRecord) -> Result<CompoundTask, ControllerError> {
        let mut tasks = Vec::with_capacity(self.specs.len());
        for spec in &self.specs {
            let goal = match spec.kind {
                TaskKind::Posture => match &reference.posture {
                    Some(full) if full.len() == self.desc.joint_count() => TaskGoal::Joints(DVector::from_iterator(
                        self.coupled.independent.len(),
                        self.coupled.independent.iter().map(|&j| full[j]),
                    )),
                    _ => continue,
                },
                _ => match reference.goals.get(&spec.id) {
                    Some(pose) => TaskGoal::Pose(*pose),
                    None => continue,
                },
            };
            tasks.push(Task {
                id: spec.id.clone(),
                kind: spec.kind,
                frame: spec.frame.clone(),
                goal,
                gain: spec.gain,
                priority: spec.priority,
            });
        }
        CompoundTask::new(tasks)
    }

    fn current_apertures(&self, state: &JointState) -> Vec<f64> {
        self.desc
            .grippers
            .iter()
            .map(|g| state.q[g.joint_index])
            .collect()
    }

    /// One servo cycle. With no reference the robot holds still.
    pub fn servo_step(
        &self,
        state: &JointState,
        reference: Option<&ReferenceRecord>,
    ) -> (JointCommand, ControllerStatus) {
        let n = self.desc.joint_count();
        let Some(reference) = reference else {
            let cmd = JointCommand::zero(state.t, n, self.current_apertures(state));
            let status = ControllerStatus {
                t: state.t,
                scale: 1.0,
                ..Default::default()
            };
            return (cmd, status);
        };

        let grippers = if reference.grippers.len() == self.desc.grippers.len() {
            reference.grippers.iter().map(|a| a.clamp(0.0, 1.0)).collect()
        } else {
            self.current_apertures(state)
        };

        let outcome = self
            .compound_task(reference)
            .and_then(|ct| resolve_coupled(&ct, &self.coupled, &self.desc, &state.q, &self.cfg).map(|r| (ct, r)));
        match outcome {
            Ok((ct, r)) => {
                let status = ControllerStatus {
                    t: state.t,
                    reference_seq: Some(reference.seq),
                    active: ct.tasks().iter().map(|t| t.id.clone()).collect(),
                    error_norms: r.error_norms,
                    scale: r.scale,
                    truncated: r.truncated,
                    fault: None,
                };
                let cmd = JointCommand {
                    t: state.t,
                    qdot_cmd: r.qdot,
                    gripper_cmd: grippers,
                };
                (cmd, status)
            }
            Err(e) => {
                let status = ControllerStatus {
                    t: state.t,
                    reference_seq: Some(reference.seq),
                    scale: 1.0,
                    fault: Some(e.to_string()),
                    ..Default::default()
                };
                (JointCommand::zero(state.t, n, grippers), status)
            }
        }
    }
}

fn placeholder_task(spec: &TaskSpec, independent: usize) -> Task {
    Task {
        id: spec.id.clone(),
        kind: spec.kind,
        frame: spec.frame.clone(),
        goal: match spec.kind {
            TaskKind::Posture => TaskGoal::Joints(DVector::zeros(independent)),
            _ => TaskGoal::Pose(Pose::identity()),
        },
        gain: spec.gain,
        priority: spec.priority,
    }
}

/// Handles the servo executor reads from and writes to.
pub struct ServoIo {
    pub hal: Arc<dyn HalEndpoint>,
    pub reference: Arc<LatestCell<ReferenceRecord>>,
    /// Published every `status_every` cycles when present.
    pub status: Option<Arc<LatestTopic<ControllerStatus>>>,
    pub status_every: u64,
}

/// Run the servo loop at the configured frequency until cancelled. Each
/// cycle reads the newest plant state and reference and writes one command.
pub fn run_servo(
    servo: Servo,
    io: ServoIo,
    rt_priority: Option<i32>,
    cancel: Cancel,
    timing: Option<Arc<TimingLog>>,
) -> std::io::Result<std::thread::JoinHandle<()>> {
    let spec = PeriodicSpec {
        name: "servo".into(),
        frequency: servo.config().frequency,
        rt_priority,
        spin: std::time::Duration::from_secs_f64(servo.config().spin_us * 1e-6),
    };
    let every = io.status_every.max(1);
    spawn_periodic(spec, cancel, timing, move |cycle| {
        let Some(state) = io.hal.read_state() else {
            return;
        };
        let reference = io.reference.read();
        let (cmd, status) = servo.servo_step(&state.joints, reference.as_deref());
        io.hal.write_command(cmd);
        if let Some(topic) = &io.status {
            if cycle % every == 0 {
                topic.publish(status);
            }
        }
    })
}
