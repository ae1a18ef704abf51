//! Prioritized whole-body velocity control.
//!
//! A compound task is an ordered list of position, orientation and posture
//! objectives. Each servo cycle the tasks are resolved in priority order in the
//! independent-joint space defined by the constraint set, every lower task
//! acting only in the null space of the tasks above it.

mod constraints;
mod linalg;
mod servo;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{orientation_error, KinematicsError, Pose, RobotDescription, Snapshot};

pub use constraints::{ConstraintSet, Coupled, Coupling};
pub use linalg::{damped_pseudoinverse, max_abs, nullspace_projector, PseudoInverse, SINGULAR_CUTOFF};
pub use servo::{run_servo, ControllerStatus, JointCommand, ReferenceRecord, Servo, ServoConfig, ServoIo, TaskSpec};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("unknown joint '{0}'")]
    UnknownJoint(String),
    #[error("invalid constraint set: {0}")]
    InvalidConstraint(String),
    #[error("invalid task '{id}': {reason}")]
    InvalidTask { id: String, reason: String },
    #[error("invalid compound task: {0}")]
    InvalidCompound(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Position,
    Orientation,
    Posture,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskGoal {
    Pose(Pose),
    /// Posture goal over the independent joints.
    Joints(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub kind: TaskKind,
    /// Controlled frame; ignored for posture tasks.
    pub frame: String,
    pub goal: TaskGoal,
    /// 1/s.
    pub gain: f64,
    /// 1 is highest.
    pub priority: u32,
}

impl Task {
    pub fn position(id: &str, frame: &str, goal: Pose, gain: f64, priority: u32) -> Self {
        Self {
            id: id.into(),
            kind: TaskKind::Position,
            frame: frame.into(),
            goal: TaskGoal::Pose(goal),
            gain,
            priority,
        }
    }

    pub fn orientation(id: &str, frame: &str, goal: Pose, gain: f64, priority: u32) -> Self {
        Self {
            kind: TaskKind::Orientation,
            ..Self::position(id, frame, goal, gain, priority)
        }
    }

    pub fn posture(id: &str, goal: DVector<f64>, gain: f64, priority: u32) -> Self {
        Self {
            id: id.into(),
            kind: TaskKind::Posture,
            frame: String::new(),
            goal: TaskGoal::Joints(goal),
            gain,
            priority,
        }
    }

    fn check(&self, desc: &RobotDescription, independent: usize) -> Result<(), ControllerError> {
        let bad = |reason: String| ControllerError::InvalidTask {
            id: self.id.clone(),
            reason,
        };
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(bad("gain must be positive".into()));
        }
        if self.priority < 1 {
            return Err(bad("priority must be at least 1".into()));
        }
        match (&self.kind, &self.goal) {
            (TaskKind::Posture, TaskGoal::Joints(g)) => {
                if g.len() != independent {
                    return Err(bad(format!(
                        "posture goal has {} entries, expected {independent}",
                        g.len()
                    )));
                }
            }
            (TaskKind::Posture, _) => return Err(bad("posture goal must be a joint vector".into())),
            (_, TaskGoal::Pose(_)) => {
                if !desc.has_frame(&self.frame) {
                    return Err(bad(format!("unknown frame '{}'", self.frame)));
                }
            }
            (_, TaskGoal::Joints(_)) => return Err(bad("cartesian goal must be a pose".into())),
        }
        Ok(())
    }
}

/// Tasks in strictly increasing priority order (highest first).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompoundTask {
    tasks: Vec<Task>,
}

impl CompoundTask {
    pub fn new(tasks: Vec<Task>) -> Result<Self, ControllerError> {
        for pair in tasks.windows(2) {
            if pair[1].priority <= pair[0].priority {
                return Err(ControllerError::InvalidCompound(format!(
                    "priority of '{}' must exceed that of '{}'",
                    pair[1].id, pair[0].id
                )));
            }
        }
        let postures: Vec<usize> = tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.kind == TaskKind::Posture)
            .map(|(i, _)| i)
            .collect();
        if postures.len() > 1 {
            return Err(ControllerError::InvalidCompound("more than one posture task".into()));
        }
        if let Some(&i) = postures.first() {
            if i + 1 != tasks.len() {
                return Err(ControllerError::InvalidCompound(
                    "posture task must have the lowest priority".into(),
                ));
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Task-space error: goal minus current.
pub fn task_error(
    task: &Task,
    desc: &RobotDescription,
    q: &DVector<f64>,
    coupled: &Coupled,
) -> Result<DVector<f64>, ControllerError> {
    task.check(desc, coupled.independent.len())?;
    let snap = Snapshot::new(desc, q)?;
    Ok(error_and_jacobian(task, &snap, q, coupled)?.0)
}

fn error_and_jacobian(
    task: &Task,
    snap: &Snapshot<'_>,
    q: &DVector<f64>,
    coupled: &Coupled,
) -> Result<(DVector<f64>, DMatrix<f64>), ControllerError> {
    match (&task.kind, &task.goal) {
        (TaskKind::Posture, TaskGoal::Joints(goal)) => {
            let current = DVector::from_iterator(goal.len(), coupled.independent.iter().map(|&j| q[j]));
            let m = coupled.independent.len();
            Ok((goal - current, DMatrix::identity(m, m)))
        }
        (TaskKind::Position, TaskGoal::Pose(goal)) => {
            let pose = snap.pose(&task.frame)?;
            let jac = snap.jacobian(&task.frame)?;
            let err = goal.position - pose.position;
            Ok((
                DVector::from_column_slice(err.as_slice()),
                jac.rows(0, 3) * &coupled.matrix,
            ))
        }
        (TaskKind::Orientation, TaskGoal::Pose(goal)) => {
            let pose = snap.pose(&task.frame)?;
            let jac = snap.jacobian(&task.frame)?;
            let err = orientation_error(&goal.orientation, &pose.orientation);
            Ok((
                DVector::from_column_slice(err.as_slice()),
                jac.rows(3, 3) * &coupled.matrix,
            ))
        }
        _ => Err(ControllerError::InvalidTask {
            id: task.id.clone(),
            reason: "goal does not match task kind".into(),
        }),
    }
}

/// Outcome of one resolution.
#[derive(Debug, Clone)]
pub struct Resolution {
    /// Full joint velocity command after limit scaling.
    pub qdot: DVector<f64>,
    /// Independent joint velocities before limit scaling.
    pub u: DVector<f64>,
    /// Uniform factor in (0, 1] applied to honour velocity limits.
    pub scale: f64,
    /// Error norm of each task, in task order.
    pub error_norms: Vec<f64>,
    /// Coupled task Jacobian of each task, in task order.
    pub jacobians: Vec<DMatrix<f64>>,
    /// Whether any undamped inversion dropped singular values.
    pub truncated: bool,
}

/// Resolve a compound task into joint velocities.
pub fn resolve(
    ct: &CompoundTask,
    cs: &ConstraintSet,
    desc: &RobotDescription,
    q: &DVector<f64>,
    cfg: &ServoConfig,
) -> Result<Resolution, ControllerError> {
    let coupled = cs.coupling_matrix(desc)?;
    resolve_coupled(ct, &coupled, desc, q, cfg)
}

/// [`resolve`] with a precomputed coupling matrix.
pub fn resolve_coupled(
    ct: &CompoundTask,
    coupled: &Coupled,
    desc: &RobotDescription,
    q: &DVector<f64>,
    cfg: &ServoConfig,
) -> Result<Resolution, ControllerError> {
    let m = coupled.independent.len();
    let snap = Snapshot::new(desc, q)?;
    let mut u = DVector::zeros(m);
    let mut null = DMatrix::<f64>::identity(m, m);
    let mut truncated = false;
    let mut error_norms = Vec::with_capacity(ct.len());
    let mut jacobians = Vec::with_capacity(ct.len());

    let last = ct.len().saturating_sub(1);
    for (i, task) in ct.tasks().iter().enumerate() {
        task.check(desc, m)?;
        let (err, jbar) = error_and_jacobian(task, &snap, q, coupled)?;
        error_norms.push(err.norm());
        let xdot = err * task.gain;
        let restricted = &jbar * &null;
        let pinv = damped_pseudoinverse(&restricted, cfg.damping);
        truncated |= pinv.truncated;
        u += &pinv.matrix * (xdot - &jbar * &u);
        if i < last {
            // The projector always comes from the undamped inverse: a damped
            // one is not idempotent and lets lower tasks leak upward.
            let exact = if cfg.damping > 0.0 {
                damped_pseudoinverse(&restricted, 0.0).matrix
            } else {
                pinv.matrix
            };
            null = &null * nullspace_projector(&restricted, &exact);
        }
        jacobians.push(jbar);
    }

    let raw = &coupled.matrix * &u;
    let mut scale = 1.0f64;
    for (v, joint) in raw.iter().zip(&desc.joints) {
        let limit = joint.vel_limit * cfg.speed_scale;
        if v.abs() > limit {
            scale = scale.min(limit / v.abs());
        }
    }
    let mut qdot = raw * scale;
    // Guard the last ulp so the limit holds exactly.
    for (v, joint) in qdot.iter_mut().zip(&desc.joints) {
        let limit = joint.vel_limit * cfg.speed_scale;
        *v = v.clamp(-limit, limit);
    }

    Ok(Resolution {
        qdot,
        u,
        scale,
        error_norms,
        jacobians,
        truncated,
    })
}
