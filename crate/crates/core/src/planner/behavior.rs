use std::collections::HashMap;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::spline::{fit_natural_spline, CubicSpline};
use super::PlannerError;
use crate::controller::TaskKind;
use crate::kinematics::{exp_map, log_map, quat_from_wxyz};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    /// `[x, y, z]` for position channels, `[w, x, y, z]` for orientation.
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub frame: String,
    pub kind: TaskKind,
    /// Waypoints are offsets from (or rotations applied to) the pose held
    /// when the behavior starts.
    #[serde(default)]
    pub relative: bool,
    pub waypoints: Vec<Waypoint>,
}

/// Data-defined autonomous motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorScript {
    pub name: String,
    pub duration: f64,
    pub channels: Vec<Channel>,
}

impl BehaviorScript {
    pub fn parse(text: &str) -> Result<Self, PlannerError> {
        let script: Self = serde_json::from_str(text).map_err(|e| PlannerError::InvalidScript(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: String| Err(PlannerError::InvalidScript(format!("{}: {m}", self.name)));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad("duration must be positive".into());
        }
        for ch in &self.channels {
            let width = match ch.kind {
                TaskKind::Position => 3,
                TaskKind::Orientation => 4,
                TaskKind::Posture => return bad("posture channels are not supported".into()),
            };
            if ch.waypoints.is_empty() {
                return bad(format!("channel '{}' has no waypoints", ch.frame));
            }
            let mut last = 0.0;
            for w in &ch.waypoints {
                // t = 0 is reserved for the prepended start pose.
                if !(w.t > last) || w.t > self.duration {
                    return bad(format!(
                        "channel '{}' waypoint times must increase within (0, duration]",
                        ch.frame
                    ));
                }
                last = w.t;
                if w.value.len() != width || w.value.iter().any(|v| !v.is_finite()) {
                    return bad(format!("channel '{}' waypoint needs {width} finite values", ch.frame));
                }
            }
        }
        Ok(())
    }
}

/// Load every `*.json` script in `dir`, keyed by script name.
pub fn load_behaviors(dir: &Path) -> Result<HashMap<String, BehaviorScript>, PlannerError> {
    let mut out = HashMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| PlannerError::Io(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| PlannerError::Io(format!("{}: {e}", path.display())))?;
        let script = BehaviorScript::parse(&text)
            .map_err(|e| PlannerError::InvalidScript(format!("{}: {e}", path.display())))?;
        out.insert(script.name.clone(), script);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub(crate) enum ChannelTrack {
    Position {
        task: String,
        splines: [CubicSpline; 3],
    },
    Orientation {
        task: String,
        start: UnitQuaternion<f64>,
        /// Splines over the log of each waypoint relative to `start`.
        splines: [CubicSpline; 3],
    },
}

impl ChannelTrack {
    pub(crate) fn position(task: &str, start: Vector3<f64>, ch: &Channel) -> Result<Self, PlannerError> {
        let mut times = vec![0.0];
        let mut pts = vec![start];
        for w in &ch.waypoints {
            let v = Vector3::new(w.value[0], w.value[1], w.value[2]);
            times.push(w.t);
            pts.push(if ch.relative { start + v } else { v });
        }
        let fit = |axis: usize| {
            let vals: Vec<f64> = pts.iter().map(|p| p[axis]).collect();
            fit_natural_spline(&times, &vals)
        };
        Ok(Self::Position {
            task: task.to_string(),
            splines: [fit(0)?, fit(1)?, fit(2)?],
        })
    }

    pub(crate) fn orientation(task: &str, start: UnitQuaternion<f64>, ch: &Channel) -> Result<Self, PlannerError> {
        let mut times = vec![0.0];
        let mut logs = vec![Vector3::zeros()];
        for w in &ch.waypoints {
            let q = quat_from_wxyz([w.value[0], w.value[1], w.value[2], w.value[3]]);
            let target = if ch.relative { q * start } else { q };
            times.push(w.t);
            logs.push(log_map(&(target * start.inverse())));
        }
        let fit = |axis: usize| {
            let vals: Vec<f64> = logs.iter().map(|p| p[axis]).collect();
            fit_natural_spline(&times, &vals)
        };
        Ok(Self::Orientation {
            task: task.to_string(),
            start,
            splines: [fit(0)?, fit(1)?, fit(2)?],
        })
    }

    pub(crate) fn task(&self) -> &str {
        match self {
            Self::Position { task, .. } | Self::Orientation { task, .. } => task,
        }
    }

    pub(crate) fn sample_position(&self, t: f64) -> Option<Vector3<f64>> {
        match self {
            Self::Position { splines, .. } => Some(Vector3::new(
                splines[0].value(t),
                splines[1].value(t),
                splines[2].value(t),
            )),
            _ => None,
        }
    }

    pub(crate) fn sample_orientation(&self, t: f64) -> Option<UnitQuaternion<f64>> {
        match self {
            Self::Orientation { start, splines, .. } => {
                let v = Vector3::new(splines[0].value(t), splines[1].value(t), splines[2].value(t));
                Some(exp_map(&v) * start)
            }
            _ => None,
        }
    }
}
