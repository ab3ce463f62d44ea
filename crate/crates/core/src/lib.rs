//! Keypoint-pairwise speed and separation monitoring between a robot and a
//! human.
//!
//! Threshold matrices are compiled from per-keypoint offsets and compensation
//! coefficients ([`policy`]), evaluated each frame against live keypoints
//! ([`monitor`]), and exercised in closed loop by [`simulation`].

pub mod body_model;
pub mod geometry;
pub mod io;
pub mod kinematics;
pub mod monitor;
pub mod policy;
pub mod simulation;
