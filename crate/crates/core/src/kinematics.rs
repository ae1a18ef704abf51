//! Robot description loading, forward kinematics, geometric Jacobians and
//! orientation arithmetic.
//!
//! Bodies are named after the joint that carries them; the fixed root body is
//! called [`BASE`]. Every description also exposes an implicit `base` frame.

use std::collections::{HashMap, HashSet};

use nalgebra::{DMatrix, DVector, Isometry3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the fixed root body.
pub const BASE: &str = "base";

const AXIS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("malformed robot description: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("joint '{joint}': {reason}")]
    InvalidJoint { joint: String, reason: String },
    #[error("frame '{frame}': {reason}")]
    InvalidFrame { frame: String, reason: String },
    #[error("gripper '{gripper}': {reason}")]
    InvalidGripper { gripper: String, reason: String },
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("expected {expected} joint values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// A rigid transform: translation in meters, orientation as a unit quaternion
/// kept in the canonical `w >= 0` hemisphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical(orientation),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

/// Flip a quaternion into the `w >= 0` hemisphere and renormalize.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.into_inner();
    let raw = if raw.w < 0.0 { -raw } else { raw };
    UnitQuaternion::new_normalize(raw)
}

/// Build a unit quaternion from `[w, x, y, z]`.
pub fn quat_from_wxyz(wxyz: [f64; 4]) -> UnitQuaternion<f64> {
    canonical(UnitQuaternion::new_normalize(Quaternion::new(
        wxyz[0], wxyz[1], wxyz[2], wxyz[3],
    )))
}

/// Axis-angle vector of `goal * current^-1` with magnitude in `[0, pi]`.
pub fn orientation_error(goal: &UnitQuaternion<f64>, current: &UnitQuaternion<f64>) -> Vector3<f64> {
    log_map(&(goal * current.inverse()))
}

/// Logarithm of a rotation as an axis-angle vector, shortest path.
pub fn log_map(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = q.quaternion();
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let s = v.norm();
    if s < 1e-300 {
        return Vector3::zeros();
    }
    let angle = 2.0 * s.atan2(w);
    v * (angle / s)
}

/// Exponential map: rotation by `|v|` radians about `v / |v|`.
pub fn exp_map(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    canonical(UnitQuaternion::from_scaled_axis(*v))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct OriginDoc {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl OriginDoc {
    fn to_isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.xyz;
        let [r, p, yaw] = self.rpy;
        Isometry3::from_parts(
            Translation3::new(x, y, z),
            UnitQuaternion::from_euler_angles(r, p, yaw),
        )
    }

    fn is_finite(&self) -> bool {
        self.xyz.iter().chain(self.rpy.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JointDoc {
    pub name: String,
    pub parent: String,
    #[serde(default)]
    pub origin: OriginDoc,
    pub axis: [f64; 3],
    pub limits: [f64; 2],
    pub vel_limit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrameDoc {
    pub name: String,
    pub body: String,
    #[serde(default)]
    pub origin: OriginDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GripperDoc {
    pub name: String,
    pub joint: String,
    pub frame: String,
}

/// On-disk robot description document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DescriptionDoc {
    pub name: String,
    pub joints: Vec<JointDoc>,
    #[serde(default)]
    pub frames: Vec<FrameDoc>,
    #[serde(default)]
    pub grippers: Vec<GripperDoc>,
}

/// A validated revolute joint.
#[derive(Debug, Clone)]
pub struct JointSpec {
    pub name: String,
    pub parent: String,
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub limits: [f64; 2],
    pub vel_limit: f64,
    parent_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct FrameSpec {
    pub name: String,
    pub body: String,
    pub offset: Isometry3<f64>,
    body_index: Option<usize>,
}

/// A gripper is a scalar aperture joint in `[0, 1]` plus the frame used as its
/// grasp point.
#[derive(Debug, Clone)]
pub struct GripperSpec {
    pub name: String,
    pub joint: String,
    pub joint_index: usize,
    pub frame: String,
}

/// Joint snapshot exchanged on the servo loop.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn at_rest(t: f64, q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            t,
            q,
            qdot: DVector::zeros(n),
        }
    }
}

/// Validated kinematic tree.
#[derive(Debug, Clone)]
pub struct RobotDescription {
    pub name: String,
    pub joints: Vec<JointSpec>,
    pub frames: Vec<FrameSpec>,
    pub grippers: Vec<GripperSpec>,
    doc: DescriptionDoc,
    /// Joint indices with every parent before its children.
    order: Vec<usize>,
    /// `ancestry[j]` lists joint `j` and every joint above it.
    ancestry: Vec<Vec<usize>>,
    frame_index: HashMap<String, usize>,
    joint_index: HashMap<String, usize>,
}

/// Parse and validate a description document.
pub fn load_description(text: &str) -> Result<RobotDescription, KinematicsError> {
    let doc: DescriptionDoc = serde_json::from_str(text)?;
    RobotDescription::from_doc(doc)
}

impl RobotDescription {
    pub fn from_doc(doc: DescriptionDoc) -> Result<Self, KinematicsError> {
        let mut joint_index = HashMap::new();
        for (i, j) in doc.joints.iter().enumerate() {
            let bad = |reason: &str| KinematicsError::InvalidJoint {
                joint: j.name.clone(),
                reason: reason.to_string(),
            };
            if j.name == BASE {
                return Err(bad("name 'base' is reserved"));
            }
            if joint_index.insert(j.name.clone(), i).is_some() {
                return Err(bad("duplicate joint name"));
            }
            if j.parent == j.name {
                return Err(bad("cycle"));
            }
            if !j.origin.is_finite() {
                return Err(bad("non-finite origin"));
            }
            let norm = Vector3::from(j.axis).norm();
            if !norm.is_finite() || (norm - 1.0).abs() > AXIS_TOLERANCE {
                return Err(bad("axis is not a unit vector"));
            }
            let [lo, hi] = j.limits;
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(bad("limits must be finite with min <= max"));
            }
            if !(j.vel_limit.is_finite() && j.vel_limit > 0.0) {
                return Err(bad("vel_limit must be positive"));
            }
        }

        let mut joints = Vec::with_capacity(doc.joints.len());
        for j in &doc.joints {
            let parent_index = if j.parent == BASE {
                None
            } else {
                match joint_index.get(&j.parent) {
                    Some(&p) => Some(p),
                    None => {
                        return Err(KinematicsError::InvalidJoint {
                            joint: j.name.clone(),
                            reason: format!("unknown parent '{}'", j.parent),
                        })
                    }
                }
            };
            joints.push(JointSpec {
                name: j.name.clone(),
                parent: j.parent.clone(),
                origin: j.origin.to_isometry(),
                axis: Unit::new_unchecked(Vector3::from(j.axis)),
                limits: j.limits,
                vel_limit: j.vel_limit,
                parent_index,
            });
        }

        let (order, ancestry) = topological_order(&joints)?;

        let mut frames = Vec::new();
        let mut frame_index = HashMap::new();
        let mut push_frame = |frame: FrameSpec| -> Result<(), KinematicsError> {
            if frame_index.contains_key(&frame.name) {
                return Err(KinematicsError::InvalidFrame {
                    frame: frame.name.clone(),
                    reason: "duplicate frame name".into(),
                });
            }
            frame_index.insert(frame.name.clone(), frames.len());
            frames.push(frame);
            Ok(())
        };
        if !doc.frames.iter().any(|f| f.name == BASE) {
            push_frame(FrameSpec {
                name: BASE.into(),
                body: BASE.into(),
                offset: Isometry3::identity(),
                body_index: None,
            })?;
        }
        for f in &doc.frames {
            let body_index = if f.body == BASE {
                None
            } else {
                Some(*joint_index.get(&f.body).ok_or_else(|| KinematicsError::InvalidFrame {
                    frame: f.name.clone(),
                    reason: format!("unknown body '{}'", f.body),
                })?)
            };
            if !f.origin.is_finite() {
                return Err(KinematicsError::InvalidFrame {
                    frame: f.name.clone(),
                    reason: "non-finite origin".into(),
                });
            }
            push_frame(FrameSpec {
                name: f.name.clone(),
                body: f.body.clone(),
                offset: f.origin.to_isometry(),
                body_index,
            })?;
        }

        let mut grippers = Vec::new();
        for g in &doc.grippers {
            let bad = |reason: String| KinematicsError::InvalidGripper {
                gripper: g.name.clone(),
                reason,
            };
            let &joint = joint_index
                .get(&g.joint)
                .ok_or_else(|| bad(format!("unknown joint '{}'", g.joint)))?;
            if !frame_index.contains_key(&g.frame) {
                return Err(bad(format!("unknown frame '{}'", g.frame)));
            }
            let [lo, hi] = joints[joint].limits;
            if lo != 0.0 || hi != 1.0 {
                return Err(bad("aperture joint limits must be [0, 1]".into()));
            }
            if grippers.iter().any(|o: &GripperSpec| o.name == g.name) {
                return Err(bad("duplicate gripper name".into()));
            }
            grippers.push(GripperSpec {
                name: g.name.clone(),
                joint: g.joint.clone(),
                joint_index: joint,
                frame: g.frame.clone(),
            });
        }

        Ok(Self {
            name: doc.name.clone(),
            joints,
            frames,
            grippers,
            doc,
            order,
            ancestry,
            frame_index,
            joint_index,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_index.get(name).copied()
    }

    pub fn frame(&self, name: &str) -> Option<&FrameSpec> {
        self.frame_index.get(name).map(|&i| &self.frames[i])
    }

    pub fn has_frame(&self, name: &str) -> bool {
        self.frame_index.contains_key(name)
    }

    pub fn frame_names(&self) -> impl Iterator<Item = &str> {
        self.frames.iter().map(|f| f.name.as_str())
    }

    pub fn gripper(&self, name: &str) -> Option<&GripperSpec> {
        self.grippers.iter().find(|g| g.name == name)
    }

    /// The document this description was built from.
    pub fn document(&self) -> &DescriptionDoc {
        &self.doc
    }

    /// Clamp each joint value into its limits.
    pub fn clamp(&self, q: &mut DVector<f64>) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.limits[0], j.limits[1]);
        }
    }

    fn check_len(&self, q: &DVector<f64>) -> Result<(), KinematicsError> {
        if q.len() != self.joints.len() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.joints.len(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    fn frame_spec(&self, frame: &str) -> Result<&FrameSpec, KinematicsError> {
        self.frame(frame)
            .ok_or_else(|| KinematicsError::UnknownFrame(frame.to_string()))
    }

    /// World transform of every joint's child body, indexed like `joints`.
    pub fn body_transforms(&self, q: &DVector<f64>) -> Result<Vec<Isometry3<f64>>, KinematicsError> {
        self.check_len(q)?;
        let mut out = vec![Isometry3::identity(); self.joints.len()];
        for &j in &self.order {
            let spec = &self.joints[j];
            let parent = spec
                .parent_index
                .map_or_else(Isometry3::identity, |p| out[p]);
            let rot = UnitQuaternion::from_axis_angle(&spec.axis, q[j]);
            out[j] = parent * spec.origin * rot;
        }
        Ok(out)
    }

    fn frame_from_bodies(&self, bodies: &[Isometry3<f64>], frame: &FrameSpec) -> Isometry3<f64> {
        let body = frame.body_index.map_or_else(Isometry3::identity, |b| bodies[b]);
        body * frame.offset
    }

    /// Pose of `frame` in the base frame.
    pub fn forward_kinematics(&self, q: &DVector<f64>, frame: &str) -> Result<Pose, KinematicsError> {
        let spec = self.frame_spec(frame)?;
        let bodies = self.body_transforms(q)?;
        Ok(Pose::from_isometry(&self.frame_from_bodies(&bodies, spec)))
    }

    /// Poses of several frames from a single pass over the tree.
    pub fn frame_poses<'a, I>(&self, q: &DVector<f64>, frames: I) -> Result<Vec<Pose>, KinematicsError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let bodies = self.body_transforms(q)?;
        frames
            .into_iter()
            .map(|name| {
                let spec = self.frame_spec(name)?;
                Ok(Pose::from_isometry(&self.frame_from_bodies(&bodies, spec)))
            })
            .collect()
    }

    /// 6 x n geometric Jacobian of `frame`: linear velocity rows first, then
    /// angular velocity, both in the base frame.
    pub fn jacobian(&self, q: &DVector<f64>, frame: &str) -> Result<DMatrix<f64>, KinematicsError> {
        let spec = self.frame_spec(frame)?;
        let bodies = self.body_transforms(q)?;
        Ok(self.jacobian_from_bodies(&bodies, spec))
    }

    /// Frame pose and Jacobian computed together.
    pub fn pose_and_jacobian(
        &self,
        q: &DVector<f64>,
        frame: &str,
    ) -> Result<(Pose, DMatrix<f64>), KinematicsError> {
        let spec = self.frame_spec(frame)?;
        let bodies = self.body_transforms(q)?;
        let pose = Pose::from_isometry(&self.frame_from_bodies(&bodies, spec));
        Ok((pose, self.jacobian_from_bodies(&bodies, spec)))
    }

    fn jacobian_from_bodies(&self, bodies: &[Isometry3<f64>], frame: &FrameSpec) -> DMatrix<f64> {
        let n = self.joints.len();
        let mut jac = DMatrix::zeros(6, n);
        let Some(body) = frame.body_index else {
            return jac;
        };
        let tip = self.frame_from_bodies(bodies, frame).translation.vector;
        for &j in &self.ancestry[body] {
            let axis = bodies[j].rotation * self.joints[j].axis.into_inner();
            let origin = bodies[j].translation.vector;
            let linear = axis.cross(&(tip - origin));
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&linear);
            jac.fixed_view_mut::<3, 1>(3, j).copy_from(&axis);
        }
        jac
    }
}

/// Body transforms for one joint vector, reused across several frame
/// queries.
pub struct Snapshot<'a> {
    desc: &'a RobotDescription,
    bodies: Vec<Isometry3<f64>>,
}

impl<'a> Snapshot<'a> {
    pub fn new(desc: &'a RobotDescription, q: &DVector<f64>) -> Result<Self, KinematicsError> {
        Ok(Self {
            desc,
            bodies: desc.body_transforms(q)?,
        })
    }

    pub fn pose(&self, frame: &str) -> Result<Pose, KinematicsError> {
        let spec = self.desc.frame_spec(frame)?;
        Ok(Pose::from_isometry(&self.desc.frame_from_bodies(&self.bodies, spec)))
    }

    pub fn jacobian(&self, frame: &str) -> Result<DMatrix<f64>, KinematicsError> {
        let spec = self.desc.frame_spec(frame)?;
        Ok(self.desc.jacobian_from_bodies(&self.bodies, spec))
    }
}

fn topological_order(joints: &[JointSpec]) -> Result<(Vec<usize>, Vec<Vec<usize>>), KinematicsError> {
    let n = joints.len();
    let mut ancestry: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (start, spec) in joints.iter().enumerate() {
        let mut chain = vec![start];
        let mut seen = HashSet::from([start]);
        let mut cursor = spec.parent_index;
        while let Some(p) = cursor {
            if !seen.insert(p) {
                return Err(KinematicsError::InvalidJoint {
                    joint: spec.name.clone(),
                    reason: "cycle".into(),
                });
            }
            chain.push(p);
            cursor = joints[p].parent_index;
        }
        ancestry.push(chain);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (ancestry[j].len(), j));
    Ok((order, ancestry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    pub(crate) const PLANAR_2: &str = r#"{
        "name": "planar2",
        "joints": [
            {"name": "j1", "parent": "base", "axis": [0,0,1], "limits": [-3.2, 3.2], "vel_limit": 1.0},
            {"name": "j2", "parent": "j1", "origin": {"xyz": [1,0,0]}, "axis": [0,0,1], "limits": [-3.2, 3.2], "vel_limit": 1.0}
        ],
        "frames": [{"name": "tip", "body": "j2", "origin": {"xyz": [1,0,0]}}]
    }"#;

    fn planar() -> RobotDescription {
        load_description(PLANAR_2).unwrap()
    }

    #[test]
    fn planar_arm_loads() {
        let d = planar();
        assert_eq!(d.joint_count(), 2);
        assert!(d.has_frame("tip"));
        assert!(d.has_frame(BASE));
    }

    #[test]
    fn self_parent_is_a_cycle() {
        let text = r#"{"name":"x","joints":[{"name":"a","parent":"a","axis":[0,0,1],"limits":[-1,1],"vel_limit":1}]}"#;
        let err = load_description(text).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
        assert!(err.to_string().contains("'a'"));
    }

    #[test]
    fn two_joint_cycle_detected() {
        let text = r#"{"name":"x","joints":[
            {"name":"a","parent":"b","axis":[0,0,1],"limits":[-1,1],"vel_limit":1},
            {"name":"b","parent":"a","axis":[0,0,1],"limits":[-1,1],"vel_limit":1}]}"#;
        let err = load_description(text).unwrap_err();
        assert!(err.to_string().contains("cycle"));
    }

    #[test]
    fn validation_names_offending_joint() {
        let unknown = r#"{"name":"x","joints":[{"name":"a","parent":"ghost","axis":[0,0,1],"limits":[-1,1],"vel_limit":1}]}"#;
        let err = load_description(unknown).unwrap_err().to_string();
        assert!(err.contains("'a'") && err.contains("unknown parent"), "{err}");

        let axis = r#"{"name":"x","joints":[{"name":"b","parent":"base","axis":[0,0,2],"limits":[-1,1],"vel_limit":1}]}"#;
        let err = load_description(axis).unwrap_err().to_string();
        assert!(err.contains("'b'") && err.contains("unit"), "{err}");

        let limits = r#"{"name":"x","joints":[{"name":"c","parent":"base","axis":[0,0,1],"limits":[1,-1],"vel_limit":1}]}"#;
        assert!(load_description(limits).is_err());

        let vel = r#"{"name":"x","joints":[{"name":"d","parent":"base","axis":[0,0,1],"limits":[-1,1],"vel_limit":0}]}"#;
        assert!(load_description(vel).is_err());
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        assert!(matches!(
            load_description("{\"name\": 3"),
            Err(KinematicsError::Parse(_))
        ));
    }

    #[test]
    fn planar_fk_examples() {
        let d = planar();
        let p = d.forward_kinematics(&DVector::from_vec(vec![0.0, 0.0]), "tip").unwrap();
        assert!((p.position - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(p.orientation.angle() < 1e-12);

        let p = d
            .forward_kinematics(&DVector::from_vec(vec![FRAC_PI_2, 0.0]), "tip")
            .unwrap();
        assert!((p.position - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn unknown_frame_and_bad_length() {
        let d = planar();
        let q = DVector::zeros(2);
        assert!(matches!(
            d.forward_kinematics(&q, "nope"),
            Err(KinematicsError::UnknownFrame(_))
        ));
        assert!(matches!(
            d.jacobian(&DVector::zeros(3), "tip"),
            Err(KinematicsError::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn planar_jacobian_at_zero() {
        let d = planar();
        let j = d.jacobian(&DVector::zeros(2), "tip").unwrap();
        // Expected columns frozen from central differences of FK.
        assert!((j.fixed_view::<3, 1>(0, 0) - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
        assert!((j.fixed_view::<3, 1>(0, 1) - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!((j.fixed_view::<3, 1>(3, 0) - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn orientation_error_examples() {
        let id = UnitQuaternion::identity();
        assert_eq!(orientation_error(&id, &id), Vector3::zeros());
        let goal = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        let e = orientation_error(&goal, &id);
        assert!((e - Vector3::new(0.0, 0.0, FRAC_PI_2)).norm() < 1e-9);
    }

    #[test]
    fn error_takes_short_way_round() {
        let goal = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 3.0);
        let current = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -3.0);
        let e = orientation_error(&goal, &current);
        assert!(e.norm() <= std::f64::consts::PI + 1e-12);
        assert!((e.norm() - (2.0 * std::f64::consts::PI - 6.0)).abs() < 1e-9);
    }

    #[test]
    fn canonical_sign() {
        let q = UnitQuaternion::new_normalize(Quaternion::new(-0.5, 0.5, 0.5, 0.5));
        let c = canonical(q);
        assert!(c.w >= 0.0);
        assert!((c.quaternion().norm() - 1.0).abs() < 1e-12);
        assert!(c.angle_to(&q) < 1e-12);
    }
}
