//! Deterministic closed-loop scenario runner.
//!
//! Each frame: build the human frame, advance the robot by the speed factor
//! decided `actuation_delay` frames earlier, evaluate, log.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{Keypoint, KeypointFrame, Point3};
use crate::io::config::ScenarioConfig;
use crate::io::trace::{SkeletonTraceRecord, TraceAgent};
use crate::kinematics::{robot_keypoints, JointState, KinematicsError};
use crate::monitor::{Event, Monitor, MonitorError, SafetyDecision, SafetyState};
use crate::policy::PolicyError;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("replay trace ends at t={last}s but the run needs frames up to t={needed}s")]
    ReplayExhausted { last: f64, needed: f64 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Sinusoidal joint motion driven by a phase accumulator, so that a zero
/// speed factor freezes the pose and resuming continues where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotMotionProfile {
    pub amplitude: Vec<f64>,
    pub center: Vec<f64>,
    pub period: f64,
    pub phase: f64,
    pub time: f64,
}

impl RobotMotionProfile {
    pub fn new(amplitude: Vec<f64>, center: Vec<f64>, period: f64) -> Self {
        Self {
            amplitude,
            center,
            period,
            phase: 0.0,
            time: 0.0,
        }
    }

    pub fn pose(&self) -> JointState {
        let s = (std::f64::consts::TAU * self.phase).sin();
        JointState::new(
            self.center
                .iter()
                .zip(&self.amplitude)
                .map(|(c, a)| c + a * s)
                .collect(),
            self.time,
        )
    }

    pub fn step(&mut self, dt: f64, speed_factor: f64) -> JointState {
        self.phase += speed_factor * dt / self.period;
        self.time += dt;
        self.pose()
    }
}

/// Free-function form of [`RobotMotionProfile::step`].
pub fn robot_motion_step(profile: &mut RobotMotionProfile, dt: f64, speed_factor: f64) -> JointState {
    profile.step(dt, speed_factor)
}

/// Built-in rigid skeleton layouts; offsets are relative to the driven
/// keypoint for a person facing the robot (looking along -x, right hand
/// toward +y).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkeletonLayout {
    /// Right arm stretched toward the robot; driven keypoint `right_wrist`.
    ArmForward,
    /// Leaning in head first, arms down; driven keypoint `nose`.
    HeadForward,
}

impl SkeletonLayout {
    pub fn name(&self) -> &'static str {
        match self {
            SkeletonLayout::ArmForward => "arm-forward",
            SkeletonLayout::HeadForward => "head-forward",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "arm-forward" => Some(SkeletonLayout::ArmForward),
            "head-forward" => Some(SkeletonLayout::HeadForward),
            _ => None,
        }
    }

    pub fn driven(&self) -> &'static str {
        match self {
            SkeletonLayout::ArmForward => "right_wrist",
            SkeletonLayout::HeadForward => "nose",
        }
    }

    pub fn offsets(&self) -> Vec<(String, Vector3<f64>)> {
        let table: &[(&str, [f64; 3])] = match self {
            SkeletonLayout::ArmForward => &[
                ("nose", [0.42, -0.18, 0.25]),
                ("neck", [0.50, -0.18, 0.0]),
                ("right_shoulder", [0.50, 0.0, 0.0]),
                ("right_elbow", [0.25, 0.0, 0.0]),
                ("right_wrist", [0.0, 0.0, 0.0]),
                ("left_shoulder", [0.50, -0.36, 0.0]),
                ("left_elbow", [0.50, -0.36, -0.28]),
                ("left_wrist", [0.50, -0.36, -0.53]),
                ("right_hip", [0.50, -0.08, -0.50]),
                ("right_knee", [0.50, -0.08, -0.95]),
                ("right_ankle", [0.50, -0.08, -1.40]),
                ("left_hip", [0.50, -0.28, -0.50]),
                ("left_knee", [0.50, -0.28, -0.95]),
                ("left_ankle", [0.50, -0.28, -1.40]),
                ("right_eye", [0.44, -0.15, 0.29]),
                ("left_eye", [0.44, -0.21, 0.29]),
                ("right_ear", [0.52, -0.11, 0.27]),
                ("left_ear", [0.52, -0.25, 0.27]),
            ],
            SkeletonLayout::HeadForward => &[
                ("nose", [0.0, 0.0, 0.0]),
                ("neck", [0.15, 0.0, -0.30]),
                ("right_shoulder", [0.15, 0.18, -0.30]),
                ("right_elbow", [0.18, 0.20, -0.58]),
                ("right_wrist", [0.15, 0.20, -0.83]),
                ("left_shoulder", [0.15, -0.18, -0.30]),
                ("left_elbow", [0.18, -0.20, -0.58]),
                ("left_wrist", [0.15, -0.20, -0.83]),
                ("right_hip", [0.35, 0.10, -0.80]),
                ("right_knee", [0.35, 0.10, -1.25]),
                ("right_ankle", [0.35, 0.10, -1.70]),
                ("left_hip", [0.35, -0.10, -0.80]),
                ("left_knee", [0.35, -0.10, -1.25]),
                ("left_ankle", [0.35, -0.10, -1.70]),
                ("right_eye", [0.02, 0.03, 0.04]),
                ("left_eye", [0.02, -0.03, 0.04]),
                ("right_ear", [0.09, 0.07, 0.02]),
                ("left_ear", [0.09, -0.07, 0.02]),
            ],
        };
        table
            .iter()
            .map(|(n, v)| (n.to_string(), Vector3::new(v[0], v[1], v[2])))
            .collect()
    }
}

/// Straight-line approach of one driven keypoint, dwell, and retreat along
/// the same line; the rest of the skeleton follows at fixed offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticApproach {
    pub driven: String,
    pub start: Point3<f64>,
    pub target: Point3<f64>,
    pub approach_start: f64,
    pub approach_speed: f64,
    pub dwell: f64,
    pub retreat_speed: f64,
    /// Offsets relative to the driven keypoint (which must appear with a zero offset).
    pub skeleton: Vec<(String, Vector3<f64>)>,
}

impl SyntheticApproach {
    pub fn with_layout(
        layout: SkeletonLayout,
        start: Point3<f64>,
        target: Point3<f64>,
        approach_start: f64,
        approach_speed: f64,
        dwell: f64,
        retreat_speed: f64,
    ) -> Self {
        Self {
            driven: layout.driven().to_string(),
            start,
            target,
            approach_start,
            approach_speed,
            dwell,
            retreat_speed,
            skeleton: layout.offsets(),
        }
    }

    fn path_length(&self) -> f64 {
        (self.target - self.start).norm()
    }

    /// Time the driven keypoint reaches the target.
    pub fn arrival_time(&self) -> f64 {
        self.approach_start + self.path_length() / self.approach_speed
    }

    pub fn retreat_start(&self) -> f64 {
        self.arrival_time() + self.dwell
    }

    pub fn retreat_end(&self) -> f64 {
        self.retreat_start() + self.path_length() / self.retreat_speed
    }

    /// Position of the driven keypoint at time `t`.
    pub fn driven_position(&self, t: f64) -> Point3<f64> {
        let length = self.path_length();
        if length == 0.0 || t <= self.approach_start {
            return self.start;
        }
        let dir = (self.target - self.start) / length;
        if t < self.arrival_time() {
            return self.start + dir * (self.approach_speed * (t - self.approach_start));
        }
        if t < self.retreat_start() {
            return self.target;
        }
        if t < self.retreat_end() {
            return self.target - dir * (self.retreat_speed * (t - self.retreat_start()));
        }
        self.start
    }

    pub fn frame_at(&self, t: f64) -> KeypointFrame {
        let anchor = self.driven_position(t);
        KeypointFrame {
            timestamp: t,
            keypoints: self
                .skeleton
                .iter()
                .map(|(name, offset)| Keypoint::present(name.clone(), anchor + offset))
                .collect(),
        }
    }
}

/// Recorded human frames replayed with sample-and-hold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayTrace {
    frames: Vec<KeypointFrame>,
}

impl ReplayTrace {
    /// Groups consecutive human records sharing a timestamp into frames;
    /// robot records are ignored.
    pub fn from_records(records: &[SkeletonTraceRecord]) -> Self {
        let mut frames: Vec<KeypointFrame> = Vec::new();
        for r in records.iter().filter(|r| r.agent == TraceAgent::Human) {
            let kp = Keypoint {
                name: r.keypoint.clone(),
                position: r.position,
                confidence: r.confidence,
            };
            match frames.last_mut() {
                Some(f) if f.timestamp == r.time => f.push(kp),
                _ => frames.push(KeypointFrame::new(r.time).with(kp)),
            }
        }
        Self { frames }
    }

    pub fn frames(&self) -> &[KeypointFrame] {
        &self.frames
    }

    pub fn last_time(&self) -> Option<f64> {
        self.frames.last().map(|f| f.timestamp)
    }

    /// Latest frame at or before `t`, re-stamped with `t`.
    pub fn frame_at(&self, t: f64) -> Option<KeypointFrame> {
        let idx = self.frames.partition_point(|f| f.timestamp <= t + 1e-9);
        let mut frame = self.frames.get(idx.checked_sub(1)?)?.clone();
        frame.timestamp = t;
        Some(frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HumanTrajectory {
    Synthetic(SyntheticApproach),
    Replay(ReplayTrace),
}

/// Free-function form of [`SyntheticApproach::frame_at`].
pub fn synthetic_human_at(traj: &SyntheticApproach, t: f64) -> KeypointFrame {
    traj.frame_at(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub decision: SafetyDecision,
    pub event: Event,
    /// Speed factor the robot moved with to reach this frame's pose.
    pub applied_speed_factor: f64,
    pub joints: JointState,
    pub human: KeypointFrame,
    pub robot: KeypointFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub time: f64,
    pub human: String,
    pub robot: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioSummary {
    pub frames: usize,
    pub event_counts: BTreeMap<Event, usize>,
    pub state_frames: BTreeMap<SafetyState, usize>,
    pub min_distance: BTreeMap<(String, String), f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioResult {
    pub frames: Vec<FrameRecord>,
    pub pair_trace: Vec<PairSample>,
    pub summary: ScenarioSummary,
}

impl ScenarioResult {
    pub fn decisions(&self) -> impl Iterator<Item = &SafetyDecision> {
        self.frames.iter().map(|f| &f.decision)
    }

    /// Non-trivial events in order, with their frame times.
    pub fn events(&self) -> Vec<(f64, Event)> {
        self.frames
            .iter()
            .filter(|f| f.event != Event::None)
            .map(|f| (f.decision.timestamp, f.event))
            .collect()
    }
}

/// Number of frames for `duration` seconds at `rate` Hz (t = 0 included,
/// t = duration excluded).
pub fn frame_count(duration: f64, rate: f64) -> usize {
    (duration * rate - 1e-9).ceil().max(0.0) as usize
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult, SimulationError> {
    let bad = |field: &str, reason: &str| SimulationError::Config {
        field: field.into(),
        reason: reason.into(),
    };
    if !(config.frame_rate.is_finite() && config.frame_rate > 0.0) {
        return Err(bad("frame_rate", "must be positive"));
    }
    if !(config.duration.is_finite() && config.duration >= 0.0) {
        return Err(bad("duration", "must be non-negative"));
    }
    if config.actuation_delay_frames == 0 {
        return Err(bad("actuation_delay_frames", "must be at least 1"));
    }
    if !(config.noise_std.is_finite() && config.noise_std >= 0.0) {
        return Err(bad("human.noise_std", "must be non-negative"));
    }

    let humans: Vec<&str> = config.policy.h_compen().names().collect();
    let robots: Vec<&str> = config.attachments.iter().map(|a| a.name.as_str()).collect();
    let matrices = Arc::new(config.policy.compile(&humans, &robots)?);
    let mut monitor = Monitor::new(matrices, config.monitor)?;

    let dt = 1.0 / config.frame_rate;
    let n = frame_count(config.duration, config.frame_rate);
    if let HumanTrajectory::Replay(trace) = &config.human {
        let needed = n.saturating_sub(1) as f64 * dt;
        let last = trace.last_time().unwrap_or(f64::NEG_INFINITY);
        if n > 0 && last + 1e-9 < needed {
            return Err(SimulationError::ReplayExhausted { last, needed });
        }
    }

    let noise = Normal::new(0.0, config.noise_std).expect("validated std");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut motion = config.motion.clone();
    let speeds = config.monitor.speed;
    let mut result = ScenarioResult {
        frames: Vec::with_capacity(n),
        ..Default::default()
    };

    for k in 0..n {
        let t = k as f64 * dt;
        let factor = match k.checked_sub(config.actuation_delay_frames) {
            Some(i) => result.frames[i].decision.speed_factor,
            None => speeds.normal,
        };
        let mut joints = if k == 0 { motion.pose() } else { motion.step(dt, factor) };
        joints.timestamp = t;

        let mut human = match &config.human {
            HumanTrajectory::Synthetic(s) => s.frame_at(t),
            HumanTrajectory::Replay(r) => r.frame_at(t).unwrap_or_else(|| KeypointFrame::new(t)),
        };
        if config.noise_std > 0.0 {
            for kp in &mut human.keypoints {
                if let Some(p) = kp.position.as_mut() {
                    *p += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                }
            }
        }
        let robot = robot_keypoints(&config.chain, &joints, &config.attachments)?;
        let (decision, event) = monitor.step(&human, &robot)?;

        for hk in &human.keypoints {
            let Some(p) = hk.position else { continue };
            for rk in &robot.keypoints {
                let Some(q) = rk.position else { continue };
                result.pair_trace.push(PairSample {
                    time: t,
                    human: hk.name.clone(),
                    robot: rk.name.clone(),
                    distance: (p - q).norm(),
                });
            }
        }
        result.frames.push(FrameRecord {
            decision,
            event,
            applied_speed_factor: factor,
            joints,
            human,
            robot,
        });
    }

    result.summary = summarize(&result);
    Ok(result)
}

fn summarize(result: &ScenarioResult) -> ScenarioSummary {
    let mut summary = ScenarioSummary {
        frames: result.frames.len(),
        event_counts: Event::ALL
            .iter()
            .filter(|e| **e != Event::None)
            .map(|e| (*e, 0))
            .collect(),
        state_frames: [SafetyState::Normal, SafetyState::Reduced, SafetyState::Stopped]
            .into_iter()
            .map(|s| (s, 0))
            .collect(),
        min_distance: BTreeMap::new(),
    };
    for f in &result.frames {
        if f.event != Event::None {
            *summary.event_counts.entry(f.event).or_default() += 1;
        }
        *summary.state_frames.entry(f.decision.state).or_default() += 1;
    }
    for s in &result.pair_trace {
        summary
            .min_distance
            .entry((s.human.clone(), s.robot.clone()))
            .and_modify(|d| *d = d.min(s.distance))
            .or_insert(s.distance);
    }
    summary
}
