//! Per-frame safety evaluation and the Normal / Reduced / Stopped machine.
//!
//! A frame is `Stopped` if any admitted keypoint pair is closer than its stop
//! threshold, `Reduced` if any pair is closer than its reduced-speed
//! threshold, and `Normal` otherwise. Without hysteresis the state depends on
//! the current frame only, so the robot resumes as soon as the pair clears.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::geometry::{KeypointFrame, Point3};
use crate::policy::ThresholdMatrices;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("{agent} keypoint `{name}` is not covered by the threshold matrices")]
    UnknownKeypoint { agent: Agent, name: String },
    #[error("hysteresis must be finite and non-negative, got {0}")]
    BadHysteresis(f64),
    #[error("confidence floor must lie in [0, 1], got {0}")]
    BadConfidenceFloor(f64),
    #[error("hold time must be finite and non-negative, got {0}")]
    BadHoldTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Agent {
    Human,
    Robot,
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Agent::Human => "human",
            Agent::Robot => "robot",
        })
    }
}

/// Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum SafetyState {
    #[default]
    Normal,
    Reduced,
    Stopped,
}

impl SafetyState {
    pub fn as_str(&self) -> &'static str {
        match self {
            SafetyState::Normal => "normal",
            SafetyState::Reduced => "reduced",
            SafetyState::Stopped => "stopped",
        }
    }
}

impl fmt::Display for SafetyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedFactors {
    pub normal: f64,
    pub reduced: f64,
    pub stopped: f64,
}

impl Default for SpeedFactors {
    fn default() -> Self {
        Self {
            normal: 1.0,
            reduced: 0.5,
            stopped: 0.0,
        }
    }
}

impl SpeedFactors {
    pub fn for_state(&self, state: SafetyState) -> f64 {
        match state {
            SafetyState::Normal => self.normal,
            SafetyState::Reduced => self.reduced,
            SafetyState::Stopped => self.stopped,
        }
    }
}

/// What to do with keypoints that are missing or below the confidence floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MissingMode {
    /// Any dropped keypoint forces `Stopped`.
    Conservative,
    /// Reuse the last admitted position for up to `hold` seconds, then
    /// behave as `Conservative`. Only meaningful through [`Monitor`].
    HoldLast { hold: f64 },
    /// Dropped keypoints are simply not evaluated.
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingPolicy {
    pub mode: MissingMode,
    pub confidence_floor: f64,
}

impl Default for MissingPolicy {
    fn default() -> Self {
        Self {
            mode: MissingMode::Conservative,
            confidence_floor: 0.0,
        }
    }
}

impl MissingPolicy {
    pub fn validate(&self) -> Result<(), MonitorError> {
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(MonitorError::BadConfidenceFloor(self.confidence_floor));
        }
        if let MissingMode::HoldLast { hold } = self.mode {
            if !(hold.is_finite() && hold >= 0.0) {
                return Err(MonitorError::BadHoldTime(hold));
            }
        }
        Ok(())
    }
}

/// One evaluated human/robot keypoint pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReading {
    pub human: String,
    pub robot: String,
    pub distance: f64,
    pub stop_threshold: Decimal,
    pub reduced_threshold: Decimal,
    pub stop_margin: f64,
    pub reduced_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub human: String,
    pub robot: String,
    pub distance: f64,
    /// `Reduced` or `Stopped`.
    pub level: SafetyState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyDecision {
    pub timestamp: f64,
    pub state: SafetyState,
    pub speed_factor: f64,
    /// Min over pairs of `distance - S_d`.
    pub stop_margin: Option<f64>,
    /// Min over pairs of `distance - S_d(reduced)`.
    pub reduced_margin: Option<f64>,
    /// Pair with the smallest stop margin.
    pub worst: Option<PairReading>,
    pub violations: Vec<Violation>,
    /// Keypoints left out of this evaluation (missing or low confidence).
    pub dropped: Vec<(Agent, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    None,
    EnterReduced,
    EnterStopped,
    ResumeReduced,
    ResumeNormal,
}

impl Event {
    pub const ALL: [Event; 5] = [
        Event::None,
        Event::EnterReduced,
        Event::EnterStopped,
        Event::ResumeReduced,
        Event::ResumeNormal,
    ];

    pub fn between(prev: SafetyState, next: SafetyState) -> Event {
        use SafetyState::*;
        match (prev, next) {
            (a, b) if a == b => Event::None,
            (_, Stopped) => Event::EnterStopped,
            (Normal, Reduced) => Event::EnterReduced,
            (Stopped, Reduced) => Event::ResumeReduced,
            (_, Normal) => Event::ResumeNormal,
            _ => unreachable!("all transitions covered"),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Event::None => "none",
            Event::EnterReduced => "enter_reduced",
            Event::EnterStopped => "enter_stopped",
            Event::ResumeReduced => "resume_reduced",
            Event::ResumeNormal => "resume_normal",
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

struct Admitted {
    points: Vec<(usize, Point3<f64>)>,
    dropped: Vec<(Agent, String)>,
}

fn admit(
    frame: &KeypointFrame,
    agent: Agent,
    index: impl Fn(&str) -> Option<usize>,
    floor: f64,
) -> Result<Admitted, MonitorError> {
    let mut points = Vec::with_capacity(frame.len());
    let mut dropped = Vec::new();
    for k in &frame.keypoints {
        let idx = index(&k.name).ok_or_else(|| MonitorError::UnknownKeypoint {
            agent,
            name: k.name.clone(),
        })?;
        match k.position {
            Some(p) if k.confidence >= floor => points.push((idx, p)),
            _ => dropped.push((agent, k.name.clone())),
        }
    }
    Ok(Admitted { points, dropped })
}

fn level(distance: f64, stop: f64, reduced: f64) -> SafetyState {
    if distance < stop {
        SafetyState::Stopped
    } else if distance < reduced {
        SafetyState::Reduced
    } else {
        SafetyState::Normal
    }
}

fn evaluate(
    matrices: &ThresholdMatrices,
    human: &KeypointFrame,
    robot: &KeypointFrame,
    prev: SafetyState,
    missing: &MissingPolicy,
    hysteresis: f64,
    speed: &SpeedFactors,
) -> Result<SafetyDecision, MonitorError> {
    let floor = missing.confidence_floor;
    let humans = admit(human, Agent::Human, |n| matrices.human_index(n), floor)?;
    let robots = admit(robot, Agent::Robot, |n| matrices.robot_index(n), floor)?;

    let conservative = !matches!(missing.mode, MissingMode::Ignore);
    let forced_stop = conservative
        && (!humans.dropped.is_empty()
            || !robots.dropped.is_empty()
            || humans.points.is_empty()
            || robots.points.is_empty());

    let mut raw = SafetyState::Normal;
    let mut relaxed = SafetyState::Normal;
    let mut worst: Option<(usize, usize, f64, f64)> = None;
    let mut reduced_margin: Option<f64> = None;
    let mut violations = Vec::new();

    for &(i, p) in &humans.points {
        for &(j, q) in &robots.points {
            let d = (p - q).norm();
            let stop = matrices.stop_m(i, j);
            let reduced = matrices.reduced_m(i, j);
            let lv = level(d, stop, reduced);
            raw = raw.max(lv);
            relaxed = relaxed.max(level(d, stop + hysteresis, reduced + hysteresis));
            if lv != SafetyState::Normal {
                violations.push(Violation {
                    human: matrices.humans()[i].clone(),
                    robot: matrices.robots()[j].clone(),
                    distance: d,
                    level: lv,
                });
            }
            let margin = d - stop;
            let better = match worst {
                None => true,
                Some((wi, wj, wm, _)) => match margin.total_cmp(&wm) {
                    Ordering::Less => true,
                    Ordering::Equal => {
                        (&matrices.humans()[i], &matrices.robots()[j])
                            < (&matrices.humans()[wi], &matrices.robots()[wj])
                    }
                    Ordering::Greater => false,
                },
            };
            if better {
                worst = Some((i, j, margin, d));
            }
            let rm = d - reduced;
            reduced_margin = Some(reduced_margin.map_or(rm, |m: f64| m.min(rm)));
        }
    }

    if forced_stop {
        raw = SafetyState::Stopped;
        relaxed = SafetyState::Stopped;
    }
    // Escalation uses the thresholds as-is; relaxing below `prev` must also
    // clear the thresholds widened by the hysteresis band.
    let state = raw.max(prev.min(relaxed));

    let worst = worst.map(|(i, j, margin, d)| PairReading {
        human: matrices.humans()[i].clone(),
        robot: matrices.robots()[j].clone(),
        distance: d,
        stop_threshold: matrices.stop_at(i, j),
        reduced_threshold: matrices.reduced_at(i, j),
        stop_margin: margin,
        reduced_margin: d - matrices.reduced_m(i, j),
    });
    let mut dropped = humans.dropped;
    dropped.extend(robots.dropped);

    Ok(SafetyDecision {
        timestamp: human.timestamp,
        state,
        speed_factor: speed.for_state(state),
        stop_margin: worst.as_ref().map(|w| w.stop_margin),
        reduced_margin,
        worst,
        violations,
        dropped,
    })
}

/// Stateless evaluation of one frame pair.
///
/// `HoldLast` has no history here and behaves like `Conservative`; use
/// [`Monitor`] for hold-last behavior.
pub fn evaluate_frame(
    matrices: &ThresholdMatrices,
    human: &KeypointFrame,
    robot: &KeypointFrame,
    missing: &MissingPolicy,
) -> Result<SafetyDecision, MonitorError> {
    evaluate(
        matrices,
        human,
        robot,
        SafetyState::Normal,
        missing,
        0.0,
        &SpeedFactors::default(),
    )
}

/// Like [`evaluate_frame`], but leaving `prev` for a less severe state
/// requires clearing every threshold by `hysteresis` meters.
pub fn evaluate_with_hysteresis(
    matrices: &ThresholdMatrices,
    human: &KeypointFrame,
    robot: &KeypointFrame,
    prev: SafetyState,
    missing: &MissingPolicy,
    hysteresis: f64,
) -> Result<SafetyDecision, MonitorError> {
    if !(hysteresis.is_finite() && hysteresis >= 0.0) {
        return Err(MonitorError::BadHysteresis(hysteresis));
    }
    evaluate(
        matrices,
        human,
        robot,
        prev,
        missing,
        hysteresis,
        &SpeedFactors::default(),
    )
}

/// Every present pair with its thresholds, sorted by stop margin and then
/// by (human, robot) name. Keypoints unknown to the matrices are skipped.
pub fn min_separation_report(
    matrices: &ThresholdMatrices,
    human: &KeypointFrame,
    robot: &KeypointFrame,
) -> Vec<PairReading> {
    let mut rows = Vec::new();
    for hk in &human.keypoints {
        let (Some(i), Some(p)) = (matrices.human_index(&hk.name), hk.position) else {
            continue;
        };
        for rk in &robot.keypoints {
            let (Some(j), Some(q)) = (matrices.robot_index(&rk.name), rk.position) else {
                continue;
            };
            let d = (p - q).norm();
            rows.push(PairReading {
                human: hk.name.clone(),
                robot: rk.name.clone(),
                distance: d,
                stop_threshold: matrices.stop_at(i, j),
                reduced_threshold: matrices.reduced_at(i, j),
                stop_margin: d - matrices.stop_m(i, j),
                reduced_margin: d - matrices.reduced_m(i, j),
            });
        }
    }
    rows.sort_by(|a, b| {
        a.stop_margin
            .total_cmp(&b.stop_margin)
            .then_with(|| a.human.cmp(&b.human))
            .then_with(|| a.robot.cmp(&b.robot))
    });
    rows
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSettings {
    pub missing: MissingPolicy,
    pub hysteresis: f64,
    pub speed: SpeedFactors,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            missing: MissingPolicy::default(),
            hysteresis: 0.0,
            speed: SpeedFactors::default(),
        }
    }
}

/// Stateful monitor for one evaluation stream: previous state plus the
/// hold-last cache. Calls must be serialized.
#[derive(Debug, Clone)]
pub struct Monitor {
    matrices: std::sync::Arc<ThresholdMatrices>,
    settings: MonitorSettings,
    state: SafetyState,
    last_seen: HashMap<(Agent, String), (Point3<f64>, f64)>,
}

impl Monitor {
    pub fn new(matrices: std::sync::Arc<ThresholdMatrices>, settings: MonitorSettings) -> Result<Self, MonitorError> {
        settings.missing.validate()?;
        if !(settings.hysteresis.is_finite() && settings.hysteresis >= 0.0) {
            return Err(MonitorError::BadHysteresis(settings.hysteresis));
        }
        Ok(Self {
            matrices,
            settings,
            state: SafetyState::Normal,
            last_seen: HashMap::new(),
        })
    }

    pub fn state(&self) -> SafetyState {
        self.state
    }

    pub fn matrices(&self) -> &ThresholdMatrices {
        &self.matrices
    }

    /// Swaps in a newly compiled policy; takes effect on the next frame.
    pub fn replace_matrices(&mut self, matrices: std::sync::Arc<ThresholdMatrices>) {
        self.matrices = matrices;
    }

    fn fill_held(&mut self, frame: &KeypointFrame, agent: Agent, hold: f64) -> KeypointFrame {
        let floor = self.settings.missing.confidence_floor;
        let mut out = frame.clone();
        for k in &mut out.keypoints {
            let key = (agent, k.name.clone());
            match k.position {
                Some(p) if k.confidence >= floor => {
                    self.last_seen.insert(key, (p, frame.timestamp));
                }
                _ => {
                    if let Some(&(p, seen)) = self.last_seen.get(&key) {
                        if frame.timestamp - seen <= hold {
                            k.position = Some(p);
                            k.confidence = k.confidence.max(floor);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn step(
        &mut self,
        human: &KeypointFrame,
        robot: &KeypointFrame,
    ) -> Result<(SafetyDecision, Event), MonitorError> {
        let decision = if let MissingMode::HoldLast { hold } = self.settings.missing.mode {
            let human = self.fill_held(human, Agent::Human, hold);
            let robot = self.fill_held(robot, Agent::Robot, hold);
            self.eval(&human, &robot)?
        } else {
            self.eval(human, robot)?
        };
        let event = Event::between(self.state, decision.state);
        self.state = decision.state;
        Ok((decision, event))
    }

    fn eval(&self, human: &KeypointFrame, robot: &KeypointFrame) -> Result<SafetyDecision, MonitorError> {
        evaluate(
            &self.matrices,
            human,
            robot,
            self.state,
            &self.settings.missing,
            self.settings.hysteresis,
            &self.settings.speed,
        )
    }
}
