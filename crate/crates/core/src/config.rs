//! Controller configuration document.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ConstraintSet, ServoConfig, TaskKind, TaskSpec};
use crate::kinematics::RobotDescription;
use crate::planner::{MotionLimits, StepConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed controller configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("controller configuration: {0}")]
    Invalid(String),
}

/// Binds an operator-facing effector name to the frame it steers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectorSpec {
    pub frame: String,
    #[serde(default)]
    pub gripper: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Reference streaming rate, Hz.
    #[serde(default = "default_planner_rate")]
    pub rate: f64,
    #[serde(default = "MotionLimits::default_linear")]
    pub linear: MotionLimits,
    #[serde(default = "MotionLimits::default_angular")]
    pub angular: MotionLimits,
}

fn default_planner_rate() -> f64 {
    100.0
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            rate: default_planner_rate(),
            linear: MotionLimits::default_linear(),
            angular: MotionLimits::default_angular(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    #[serde(default)]
    pub servo: ServoConfig,
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub effectors: BTreeMap<String, EffectorSpec>,
    /// Home posture by joint name; unlisted joints default to zero.
    #[serde(default)]
    pub home: BTreeMap<String, f64>,
    #[serde(default)]
    pub steps: StepConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
}

impl ControllerConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Cross-check names against a robot description.
    pub fn validate(&self, desc: &RobotDescription) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.servo.validate() {
            return invalid(e.to_string());
        }
        if let Err(e) = self.constraints.validate(desc) {
            return invalid(e.to_string());
        }
        for t in &self.tasks {
            if t.kind != TaskKind::Posture && !desc.has_frame(&t.frame) {
                return invalid(format!("task '{}' uses unknown frame '{}'", t.id, t.frame));
            }
        }
        for (name, e) in &self.effectors {
            if !desc.has_frame(&e.frame) {
                return invalid(format!("effector '{name}' uses unknown frame '{}'", e.frame));
            }
            if let Some(g) = &e.gripper {
                if desc.gripper(g).is_none() {
                    return invalid(format!("effector '{name}' uses unknown gripper '{g}'"));
                }
            }
        }
        for joint in self.home.keys() {
            if desc.joint_index(joint).is_none() {
                return invalid(format!("home posture names unknown joint '{joint}'"));
            }
        }
        if !(self.planner.rate > 0.0) {
            return invalid("planner rate must be positive".into());
        }
        for limits in [&self.planner.linear, &self.planner.angular] {
            if !(limits.vmax > 0.0 && limits.amax > 0.0) {
                return invalid("planner vmax and amax must be positive".into());
            }
        }
        if !(self.steps.position > 0.0 && self.steps.rotation > 0.0) {
            return invalid("step sizes must be positive".into());
        }
        Ok(())
    }

    /// Home posture as a full joint vector, clamped into the limits.
    pub fn home_posture(&self, desc: &RobotDescription) -> DVector<f64> {
        let mut q = DVector::from_iterator(
            desc.joint_count(),
            desc.joints.iter().map(|j| self.home.get(&j.name).copied().unwrap_or(0.0)),
        );
        desc.clamp(&mut q);
        q
    }

    /// Id of the task of `kind` that controls `frame`.
    pub fn task_for(&self, frame: &str, kind: TaskKind) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.kind == kind && t.frame == frame)
    }
}
