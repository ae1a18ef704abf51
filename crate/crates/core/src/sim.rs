//! Kinematic plant standing in for the robot, and the HAL seam the servo
//! loop talks to.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::LatestTopic;
use crate::cell::LatestCell;
use crate::controller::JointCommand;
use crate::kinematics::{JointState, RobotDescription, Snapshot};
use crate::periodic::{spawn_periodic, Cancel, PeriodicSpec, TimingLog};

/// Commands older than this are replaced by a zero-velocity hold.
pub const COMMAND_STALENESS: Duration = Duration::from_millis(50);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("malformed scene: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scene: {0}")]
    Invalid(String),
    #[error("no hardware: {0}")]
    NoHardware(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDoc {
    pub name: String,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    #[serde(default)]
    pub objects: Vec<ObjectDoc>,
    #[serde(default = "default_radius")]
    pub grasp_radius: f64,
    #[serde(default = "default_close")]
    pub aperture_close: f64,
    #[serde(default = "default_open")]
    pub aperture_open: f64,
    #[serde(default = "default_radius")]
    pub push_radius: f64,
    /// Frames that push free objects.
    #[serde(default)]
    pub pushers: Vec<String>,
    /// Aperture slew rate, 1/s.
    #[serde(default = "default_gripper_rate")]
    pub gripper_rate: f64,
}

fn default_radius() -> f64 {
    0.05
}
fn default_close() -> f64 {
    0.2
}
fn default_open() -> f64 {
    0.8
}
fn default_gripper_rate() -> f64 {
    2.0
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            objects: Vec::new(),
            grasp_radius: default_radius(),
            aperture_close: default_close(),
            aperture_open: default_open(),
            push_radius: default_radius(),
            pushers: Vec::new(),
            gripper_rate: default_gripper_rate(),
        }
    }
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self, desc: &RobotDescription) -> Result<(), SimError> {
        for f in &self.pushers {
            if !desc.has_frame(f) {
                return Err(SimError::Invalid(format!("pusher frame '{f}' is not in the description")));
            }
        }
        if !(self.aperture_close < self.aperture_open) {
            return Err(SimError::Invalid("aperture_close must be below aperture_open".into()));
        }
        if !(self.grasp_radius > 0.0 && self.push_radius >= 0.0 && self.gripper_rate > 0.0) {
            return Err(SimError::Invalid("radii and gripper rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub name: String,
    pub position: Vector3<f64>,
    /// Gripper name while held.
    pub attached_to: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub joints: JointState,
    /// Per gripper, description order, in [0, 1].
    pub apertures: Vec<f64>,
    pub objects: Vec<ObjectState>,
}

impl PlantState {
    /// Robot at rest at `q` (clamped); apertures read from the gripper joints.
    pub fn initial(desc: &RobotDescription, scene: &SceneConfig, mut q: DVector<f64>) -> Self {
        desc.clamp(&mut q);
        let apertures = desc.grippers.iter().map(|g| q[g.joint_index].clamp(0.0, 1.0)).collect();
        Self {
            joints: JointState::at_rest(0.0, q),
            apertures,
            objects: scene
                .objects
                .iter()
                .map(|o| ObjectState {
                    name: o.name.clone(),
                    position: Vector3::from(o.position),
                    attached_to: None,
                })
                .collect(),
        }
    }
}

/// Integrate one plant cycle. Pure: identical inputs give identical outputs.
pub fn step(desc: &RobotDescription, scene: &SceneConfig, state: &PlantState, cmd: &JointCommand, dt: f64) -> PlantState {
    let n = desc.joint_count();
    let q0 = &state.joints.q;
    let mut q = q0.clone();
    for (i, j) in desc.joints.iter().enumerate() {
        let v = cmd.qdot_cmd.get(i).copied().unwrap_or(0.0);
        q[i] = (q0[i] + v * dt).clamp(j.limits[0], j.limits[1]);
    }
    let max_slew = scene.gripper_rate * dt;
    let mut apertures = state.apertures.clone();
    for (k, g) in desc.grippers.iter().enumerate() {
        let target = cmd.gripper_cmd.get(k).copied().unwrap_or(apertures[k]).clamp(0.0, 1.0);
        apertures[k] += (target - apertures[k]).clamp(-max_slew, max_slew);
        let limits = desc.joints[g.joint_index].limits;
        q[g.joint_index] = apertures[k].clamp(limits[0], limits[1]);
    }
    let qdot = DVector::from_iterator(n, (0..n).map(|i| (q[i] - q0[i]) / dt));
    let next = PlantState {
        joints: JointState {
            t: state.joints.t + dt,
            q,
            qdot,
        },
        apertures,
        objects: state.objects.clone(),
    };
    attach_check(desc, scene, q0, next)
}

/// Apply grasp, release and push rules to `state`, given the joint values
/// `q_prev` of the previous cycle (used for pusher displacement).
pub fn attach_check(desc: &RobotDescription, scene: &SceneConfig, q_prev: &DVector<f64>, mut state: PlantState) -> PlantState {
    if state.objects.is_empty() {
        return state;
    }
    let (Ok(now), Ok(before)) = (Snapshot::new(desc, &state.joints.q), Snapshot::new(desc, q_prev)) else {
        return state;
    };
    let frame_pos = |snap: &Snapshot, f: &str| snap.pose(f).map(|p| p.position).ok();

    // Pushing by free pushers acts on unattached objects only.
    for pusher in &scene.pushers {
        let (Some(p0), Some(p1)) = (frame_pos(&before, pusher), frame_pos(&now, pusher)) else {
            continue;
        };
        let disp = Vector3::new(p1.x - p0.x, p1.y - p0.y, 0.0);
        for obj in state.objects.iter_mut().filter(|o| o.attached_to.is_none()) {
            let toward = Vector3::new(obj.position.x - p0.x, obj.position.y - p0.y, 0.0);
            if (obj.position - p0).norm() <= scene.push_radius && disp.dot(&toward) > 0.0 {
                obj.position += disp;
            }
        }
    }

    for (k, g) in desc.grippers.iter().enumerate() {
        let aperture = state.apertures[k];
        let Some(gp) = frame_pos(&now, &g.frame) else { continue };
        for obj in state.objects.iter_mut() {
            match &obj.attached_to {
                Some(holder) if *holder == g.name => {
                    if aperture > scene.aperture_open {
                        obj.attached_to = None;
                    }
                }
                None => {
                    if aperture < scene.aperture_close && (obj.position - gp).norm() <= scene.grasp_radius {
                        obj.attached_to = Some(g.name.clone());
                    }
                }
                Some(_) => {}
            }
        }
    }

    // Held objects ride rigidly with their gripper frame.
    for obj in state.objects.iter_mut() {
        if let Some(holder) = &obj.attached_to {
            if let Some(gp) = desc.gripper(holder).and_then(|g| frame_pos(&now, &g.frame)) {
                obj.position = gp;
            }
        }
    }
    state
}

/// The servo loop's view of the robot, real or simulated.
pub trait HalEndpoint: Send + Sync {
    /// Latest plant state; never blocks.
    fn read_state(&self) -> Option<Arc<PlantState>>;
    /// Replace any unconsumed command.
    fn write_command(&self, cmd: JointCommand);
}

#[derive(Debug, Clone)]
pub struct TimedCommand {
    pub written: Instant,
    pub command: JointCommand,
}

/// Two latest-value cells shared between the servo and plant executors.
#[derive(Debug, Default)]
pub struct SharedMemoryHal {
    state: LatestCell<PlantState>,
    command: LatestCell<TimedCommand>,
}

impl SharedMemoryHal {
    pub fn new(initial: PlantState) -> Self {
        let hal = Self::default();
        hal.state.write(initial);
        hal
    }

    /// Plant side: latest command and when it was written.
    pub fn take_command(&self) -> Option<Arc<TimedCommand>> {
        self.command.read()
    }

    /// Plant side: publish a new state.
    pub fn publish_state(&self, state: PlantState) {
        self.state.write(state);
    }
}

impl HalEndpoint for SharedMemoryHal {
    fn read_state(&self) -> Option<Arc<PlantState>> {
        self.state.read()
    }

    fn write_command(&self, cmd: JointCommand) {
        self.command.write(TimedCommand {
            written: Instant::now(),
            command: cmd,
        });
    }
}

/// Physical robot endpoint. No driver is bundled, so connecting always fails.
pub fn connect_hardware(target: &str) -> Result<Box<dyn HalEndpoint>, SimError> {
    Err(SimError::NoHardware(format!(
        "no hardware driver is available for '{target}'; use the simulated plant"
    )))
}

/// Snapshot of the scene objects, published for telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub t: f64,
    pub objects: Vec<ObjectState>,
    pub apertures: Vec<f64>,
}

pub struct PlantIo {
    pub hal: Arc<SharedMemoryHal>,
    pub joint_states: Arc<LatestTopic<JointState>>,
    pub scene_state: Option<Arc<LatestTopic<SceneState>>>,
}

/// Run the plant at `rate` Hz until cancelled. Uses a fixed `dt = 1/rate`.
pub fn run_plant(
    desc: Arc<RobotDescription>,
    scene: SceneConfig,
    io: PlantIo,
    rate: f64,
    rt_priority: Option<i32>,
    cancel: Cancel,
    timing: Option<Arc<TimingLog>>,
) -> std::io::Result<std::thread::JoinHandle<()>> {
    let dt = 1.0 / rate;
    let mut state = io.hal.read_state().map(|s| (*s).clone()).unwrap_or_else(|| {
        PlantState::initial(&desc, &scene, DVector::zeros(desc.joint_count()))
    });
    io.joint_states.publish(state.joints.clone());
    let spec = PeriodicSpec {
        name: "plant".into(),
        frequency: rate,
        rt_priority,
        spin: std::time::Duration::ZERO,
    };
    spawn_periodic(spec, cancel, timing, move |cycle| {
        let held = JointCommand::zero(state.joints.t, desc.joint_count(), state.apertures.clone());
        let latest = io.hal.take_command();
        let cmd = match &latest {
            Some(c) if c.written.elapsed() <= COMMAND_STALENESS => c.command.clone(),
            Some(c) => JointCommand {
                gripper_cmd: c.command.gripper_cmd.clone(),
                ..held
            },
            None => held,
        };
        state = step(&desc, &scene, &state, &cmd, dt);
        io.hal.publish_state(state.clone());
        io.joint_states.publish(state.joints.clone());
        // Scene telemetry does not need the full plant rate.
        if let Some(topic) = &io.scene_state {
            if cycle % 10 == 0 {
                topic.publish(SceneState {
                    t: state.joints.t,
                    objects: state.objects.clone(),
                    apertures: state.apertures.clone(),
                });
            }
        }
    })
}
