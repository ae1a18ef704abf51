use std::collections::BTreeMap;

use carl_core::controller::ControllerStatus;
use carl_core::kinematics::{JointState, RobotDescription, Snapshot};
use carl_core::sim::SceneState;

use crate::envelope::{FramePose, StatusPayload, TelemetryPayload};

/// Build a telemetry frame from one joint sample. Frame poses are computed
/// here from `state.q`, so they always agree with the joint vector sent.
pub fn compose_telemetry(
    desc: &RobotDescription,
    frames: &[String],
    state: &JointState,
    status: Option<&ControllerStatus>,
    scene: Option<&SceneState>,
) -> TelemetryPayload {
    let mut effectors = BTreeMap::new();
    if let Ok(snap) = Snapshot::new(desc, &state.q) {
        for f in frames {
            if let Ok(pose) = snap.pose(f) {
                effectors.insert(
                    f.clone(),
                    FramePose {
                        p: [pose.position.x, pose.position.y, pose.position.z],
                        quat: pose.quat_wxyz(),
                    },
                );
            }
        }
    }
    let grippers = desc
        .grippers
        .iter()
        .map(|g| (g.name.clone(), state.q[g.joint_index]))
        .collect();
    let first = scene.and_then(|s| s.objects.first());
    TelemetryPayload {
        sample_t: state.t,
        q: state.q.iter().copied().collect(),
        effectors,
        grippers,
        object: first.map(|o| [o.position.x, o.position.y, o.position.z]),
        attached: first.and_then(|o| o.attached_to.clone()),
        status: status.map(StatusPayload::from).unwrap_or_default(),
    }
}
