//! Serial-chain forward kinematics and robot keypoints.
//!
//! A chain is a base transform followed by joints. Each joint moves first
//! (rotation about, or translation along, its axis in the incoming frame) and
//! then applies its fixed transform to reach the next link frame:
//!
//! ```text
//! link_0 = base
//! link_k = link_{k-1} · motion_k(q_k) · fixed_k
//! ```
//!
//! Keypoints are attached to link frames with a constant offset.

use nalgebra::{Unit, Vector3};
use thiserror::Error;

use crate::geometry::{AffineTransform, Keypoint, KeypointFrame, Point3};

const AXIS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("chain has {expected} joints but joint state has {got} values")]
    JointCountMismatch { expected: usize, got: usize },
    #[error("keypoint `{name}` refers to link {link}, chain has links 0..={max}")]
    BadLinkIndex { name: String, link: usize, max: usize },
    #[error("joint {0} axis is not unit length")]
    AxisNotUnit(usize),
    #[error("joint {0} fixed transform is not rigid")]
    NotRigid(usize),
    #[error("base transform is not rigid")]
    BaseNotRigid,
    #[error("chain has no joints")]
    Empty,
    #[error("joint value {0} is not finite")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointType {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub axis: Unit<Vector3<f64>>,
    pub joint_type: JointType,
    pub fixed: AffineTransform,
}

impl Joint {
    pub fn revolute(axis: Vector3<f64>, fixed: AffineTransform) -> Self {
        Self {
            axis: Unit::new_normalize(axis),
            joint_type: JointType::Revolute,
            fixed,
        }
    }

    pub fn prismatic(axis: Vector3<f64>, fixed: AffineTransform) -> Self {
        Self {
            axis: Unit::new_normalize(axis),
            joint_type: JointType::Prismatic,
            fixed,
        }
    }

    fn motion(&self, value: f64) -> AffineTransform {
        match self.joint_type {
            JointType::Revolute => AffineTransform::from_axis_angle(&self.axis, value),
            JointType::Prismatic => AffineTransform::from_translation(self.axis.into_inner() * value),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointChain {
    base: AffineTransform,
    joints: Vec<Joint>,
}

impl JointChain {
    pub fn new(base: AffineTransform, joints: Vec<Joint>) -> Result<Self, KinematicsError> {
        if joints.is_empty() {
            return Err(KinematicsError::Empty);
        }
        if !base.is_rigid() {
            return Err(KinematicsError::BaseNotRigid);
        }
        for (i, j) in joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > AXIS_TOL {
                return Err(KinematicsError::AxisNotUnit(i));
            }
            if !j.fixed.is_rigid() {
                return Err(KinematicsError::NotRigid(i));
            }
        }
        Ok(Self { base, joints })
    }

    pub fn base(&self) -> &AffineTransform {
        &self.base
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Link frames `0..=joint_count`; frame 0 is the base.
    pub fn forward(&self, q: &JointState) -> Result<Vec<AffineTransform>, KinematicsError> {
        if q.values.len() != self.joints.len() {
            return Err(KinematicsError::JointCountMismatch {
                expected: self.joints.len(),
                got: q.values.len(),
            });
        }
        if let Some(i) = q.values.iter().position(|v| !v.is_finite()) {
            return Err(KinematicsError::NonFinite(i));
        }
        let mut frames = Vec::with_capacity(self.joints.len() + 1);
        let mut current = self.base;
        frames.push(current);
        for (joint, &value) in self.joints.iter().zip(&q.values) {
            current = current.compose(&joint.motion(value)).compose(&joint.fixed);
            frames.push(current);
        }
        Ok(frames)
    }

    /// Sum of fixed translation lengths: an upper bound on how far any link
    /// origin sits from the base origin while prismatic joints are at zero.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.fixed.translation().norm()).sum()
    }
}

/// Free-function form of [`JointChain::forward`].
pub fn forward_kinematics(chain: &JointChain, q: &JointState) -> Result<Vec<AffineTransform>, KinematicsError> {
    chain.forward(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub values: Vec<f64>,
    pub timestamp: f64,
}

impl JointState {
    pub fn new(values: Vec<f64>, timestamp: f64) -> Self {
        Self { values, timestamp }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n], 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointAttachment {
    pub name: String,
    pub link: usize,
    pub offset: Point3<f64>,
}

impl KeypointAttachment {
    pub fn new(name: impl Into<String>, link: usize, offset: Point3<f64>) -> Self {
        Self {
            name: name.into(),
            link,
            offset,
        }
    }
}

pub fn check_attachments(chain: &JointChain, attachments: &[KeypointAttachment]) -> Result<(), KinematicsError> {
    let max = chain.joint_count();
    match attachments.iter().find(|a| a.link > max) {
        Some(a) => Err(KinematicsError::BadLinkIndex {
            name: a.name.clone(),
            link: a.link,
            max,
        }),
        None => Ok(()),
    }
}

pub fn robot_keypoints(
    chain: &JointChain,
    q: &JointState,
    attachments: &[KeypointAttachment],
) -> Result<KeypointFrame, KinematicsError> {
    check_attachments(chain, attachments)?;
    let frames = chain.forward(q)?;
    Ok(KeypointFrame {
        timestamp: q.timestamp,
        keypoints: attachments
            .iter()
            .map(|a| Keypoint::present(a.name.clone(), frames[a.link].apply(&a.offset)))
            .collect(),
    })
}

/// Name of the bundled approximate Nao left arm.
pub const NAO_LEFT_ARM: &str = "nao-left-arm-approx";

/// Four-joint left arm roughly shaped like a Nao's: shoulder pitch, shoulder
/// roll, elbow yaw, elbow roll. At zero the arm points along +x from a
/// shoulder at (0, 0.098, 0.1). Link lengths are illustrative.
pub fn nao_left_arm() -> (JointChain, Vec<KeypointAttachment>) {
    const UPPER_ARM: f64 = 0.105;
    const LOWER_ARM: f64 = 0.05595;
    const HAND: f64 = 0.05775;
    let base = AffineTransform::from_translation(Vector3::new(0.0, 0.098, 0.1));
    let joints = vec![
        Joint::revolute(Vector3::y(), AffineTransform::identity()),
        Joint::revolute(
            Vector3::z(),
            AffineTransform::from_translation(Vector3::new(UPPER_ARM, 0.0, 0.0)),
        ),
        Joint::revolute(Vector3::x(), AffineTransform::identity()),
        Joint::revolute(
            Vector3::z(),
            AffineTransform::from_translation(Vector3::new(LOWER_ARM, 0.0, 0.0)),
        ),
    ];
    let chain = JointChain::new(base, joints).expect("bundled chain is valid");
    let attachments = vec![
        KeypointAttachment::new("elbow", 2, Point3::origin()),
        KeypointAttachment::new("forearm", 4, Point3::origin()),
        KeypointAttachment::new("end_effector", 4, Point3::new(HAND, 0.0, 0.0)),
    ];
    (chain, attachments)
}
