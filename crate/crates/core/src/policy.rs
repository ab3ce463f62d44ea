//! Separation policy and its compiled keypoint-pair threshold matrices.
//!
//! For human keypoint `i` and robot keypoint `j`:
//!
//! ```text
//! S_g(i, j) = h_s(i) + baseline + r_s(j)            (+ v_max·(t_react + t_stop))
//! S_d(i, j) = h_compen(i) + S_g(i, j) + r_compen(j)
//! ```
//!
//! The stop matrix uses `s_p` as baseline, the reduced-speed matrix uses
//! `s_p_reduced`. All policy quantities are exact decimals.

use std::collections::{BTreeMap, HashMap};

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use thiserror::Error;

use crate::body_model::{
    measured_human_table, measured_robot_table, CompensationTable, HEAD_KEYPOINTS, HUMAN_KEYPOINTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("unknown {agent} keypoint `{name}`")]
    UnknownKeypoint { agent: &'static str, name: String },
    #[error("{field} must be non-negative, got {value}")]
    Negative { field: String, value: Decimal },
    #[error("s_p ({s_p}) must not exceed s_p_reduced ({s_p_reduced})")]
    BaselineOrder { s_p: Decimal, s_p_reduced: Decimal },
    #[error("{0} keypoint list is empty")]
    EmptyKeypoints(&'static str),
}

/// Optional distance increment `v_max · (t_react + t_stop)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityTerm {
    pub v_max: Decimal,
    pub t_react: Decimal,
    pub t_stop: Decimal,
}

impl VelocityTerm {
    pub fn increment(&self) -> Decimal {
        self.v_max * (self.t_react + self.t_stop)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationPolicy {
    s_p: Decimal,
    s_p_reduced: Decimal,
    h_s: BTreeMap<String, Decimal>,
    r_s: BTreeMap<String, Decimal>,
    h_compen: CompensationTable,
    r_compen: CompensationTable,
    velocity: Option<VelocityTerm>,
}

fn non_negative(field: String, value: Decimal) -> Result<(), PolicyError> {
    if value.is_sign_negative() && !value.is_zero() {
        Err(PolicyError::Negative { field, value })
    } else {
        Ok(())
    }
}

impl SeparationPolicy {
    /// Policy with zero offsets and no velocity term.
    pub fn new(
        s_p: Decimal,
        s_p_reduced: Decimal,
        h_compen: CompensationTable,
        r_compen: CompensationTable,
    ) -> Result<Self, PolicyError> {
        non_negative("s_p".into(), s_p)?;
        non_negative("s_p_reduced".into(), s_p_reduced)?;
        if s_p > s_p_reduced {
            return Err(PolicyError::BaselineOrder { s_p, s_p_reduced });
        }
        for (name, v) in h_compen.iter() {
            non_negative(format!("h_compen.{name}"), v)?;
        }
        for (name, v) in r_compen.iter() {
            non_negative(format!("r_compen.{name}"), v)?;
        }
        Ok(Self {
            s_p,
            s_p_reduced,
            h_s: BTreeMap::new(),
            r_s: BTreeMap::new(),
            h_compen,
            r_compen,
            velocity: None,
        })
    }

    /// Sets the human offset for `name`, replacing any previous value.
    pub fn with_human_offset(mut self, name: &str, offset: Decimal) -> Result<Self, PolicyError> {
        non_negative(format!("h_s.{name}"), offset)?;
        if !self.h_compen.contains(name) {
            return Err(PolicyError::UnknownKeypoint {
                agent: "human",
                name: name.into(),
            });
        }
        self.h_s.insert(name.into(), offset);
        Ok(self)
    }

    pub fn with_robot_offset(mut self, name: &str, offset: Decimal) -> Result<Self, PolicyError> {
        non_negative(format!("r_s.{name}"), offset)?;
        if !self.r_compen.contains(name) {
            return Err(PolicyError::UnknownKeypoint {
                agent: "robot",
                name: name.into(),
            });
        }
        self.r_s.insert(name.into(), offset);
        Ok(self)
    }

    pub fn with_velocity_term(mut self, term: VelocityTerm) -> Result<Self, PolicyError> {
        non_negative("velocity_term.v_max".into(), term.v_max)?;
        non_negative("velocity_term.t_react".into(), term.t_react)?;
        non_negative("velocity_term.t_stop".into(), term.t_stop)?;
        self.velocity = Some(term);
        Ok(self)
    }

    pub fn s_p(&self) -> Decimal {
        self.s_p
    }

    pub fn s_p_reduced(&self) -> Decimal {
        self.s_p_reduced
    }

    pub fn h_compen(&self) -> &CompensationTable {
        &self.h_compen
    }

    pub fn r_compen(&self) -> &CompensationTable {
        &self.r_compen
    }

    pub fn velocity_term(&self) -> Option<&VelocityTerm> {
        self.velocity.as_ref()
    }

    pub fn human_offset(&self, name: &str) -> Result<Decimal, PolicyError> {
        if !self.h_compen.contains(name) {
            return Err(PolicyError::UnknownKeypoint {
                agent: "human",
                name: name.into(),
            });
        }
        Ok(self.h_s.get(name).copied().unwrap_or(Decimal::ZERO))
    }

    pub fn robot_offset(&self, name: &str) -> Result<Decimal, PolicyError> {
        if !self.r_compen.contains(name) {
            return Err(PolicyError::UnknownKeypoint {
                agent: "robot",
                name: name.into(),
            });
        }
        Ok(self.r_s.get(name).copied().unwrap_or(Decimal::ZERO))
    }

    /// `S_g` for one pair over an explicit baseline.
    pub fn guaranteed_distance(&self, human: &str, robot: &str, baseline: Decimal) -> Result<Decimal, PolicyError> {
        let v = self.velocity.map(|t| t.increment()).unwrap_or(Decimal::ZERO);
        Ok(self.human_offset(human)? + baseline + self.robot_offset(robot)? + v)
    }

    /// `S_d` for one pair over an explicit baseline.
    pub fn keypoint_separation(&self, human: &str, robot: &str, baseline: Decimal) -> Result<Decimal, PolicyError> {
        let g = self.guaranteed_distance(human, robot, baseline)?;
        // both present: guaranteed_distance checked membership
        Ok(self.h_compen.get(human).unwrap() + g + self.r_compen.get(robot).unwrap())
    }

    pub fn compile<S: AsRef<str>>(&self, humans: &[S], robots: &[S]) -> Result<ThresholdMatrices, PolicyError> {
        ThresholdMatrices::compile(self, humans, robots)
    }
}

/// Compiled stop and reduced-speed thresholds, row = human, column = robot.
///
/// Immutable; a policy change means compiling a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMatrices {
    humans: Vec<String>,
    robots: Vec<String>,
    human_index: HashMap<String, usize>,
    robot_index: HashMap<String, usize>,
    stop: Vec<Decimal>,
    reduced: Vec<Decimal>,
    stop_m: Vec<f64>,
    reduced_m: Vec<f64>,
    policy: SeparationPolicy,
}

impl ThresholdMatrices {
    pub fn compile<S: AsRef<str>>(policy: &SeparationPolicy, humans: &[S], robots: &[S]) -> Result<Self, PolicyError> {
        if humans.is_empty() {
            return Err(PolicyError::EmptyKeypoints("human"));
        }
        if robots.is_empty() {
            return Err(PolicyError::EmptyKeypoints("robot"));
        }
        let humans: Vec<String> = humans.iter().map(|s| s.as_ref().to_string()).collect();
        let robots: Vec<String> = robots.iter().map(|s| s.as_ref().to_string()).collect();
        let mut stop = Vec::with_capacity(humans.len() * robots.len());
        let mut reduced = Vec::with_capacity(humans.len() * robots.len());
        for h in &humans {
            for r in &robots {
                stop.push(policy.keypoint_separation(h, r, policy.s_p)?.normalize());
                reduced.push(policy.keypoint_separation(h, r, policy.s_p_reduced)?.normalize());
            }
        }
        let to_m = |v: &Decimal| v.to_f64().expect("thresholds fit in f64");
        Ok(Self {
            human_index: humans.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect(),
            robot_index: robots.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect(),
            stop_m: stop.iter().map(to_m).collect(),
            reduced_m: reduced.iter().map(to_m).collect(),
            humans,
            robots,
            stop,
            reduced,
            policy: policy.clone(),
        })
    }

    pub fn humans(&self) -> &[String] {
        &self.humans
    }

    pub fn robots(&self) -> &[String] {
        &self.robots
    }

    pub fn policy(&self) -> &SeparationPolicy {
        &self.policy
    }

    pub fn human_index(&self, name: &str) -> Option<usize> {
        self.human_index.get(name).copied()
    }

    pub fn robot_index(&self, name: &str) -> Option<usize> {
        self.robot_index.get(name).copied()
    }

    #[inline]
    fn flat(&self, i: usize, j: usize) -> usize {
        i * self.robots.len() + j
    }

    /// Exact stop threshold `S_d`.
    pub fn stop(&self, human: &str, robot: &str) -> Option<Decimal> {
        Some(self.stop[self.flat(self.human_index(human)?, self.robot_index(robot)?)])
    }

    /// Exact reduced-speed threshold `S_d(reduced)`.
    pub fn reduced(&self, human: &str, robot: &str) -> Option<Decimal> {
        Some(self.reduced[self.flat(self.human_index(human)?, self.robot_index(robot)?)])
    }

    pub fn stop_at(&self, i: usize, j: usize) -> Decimal {
        self.stop[self.flat(i, j)]
    }

    pub fn reduced_at(&self, i: usize, j: usize) -> Decimal {
        self.reduced[self.flat(i, j)]
    }

    /// Stop threshold in meters as a float, for distance comparisons.
    #[inline]
    pub fn stop_m(&self, i: usize, j: usize) -> f64 {
        self.stop_m[self.flat(i, j)]
    }

    #[inline]
    pub fn reduced_m(&self, i: usize, j: usize) -> f64 {
        self.reduced_m[self.flat(i, j)]
    }
}

/// Which of the three demonstration policies to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetScenario {
    /// Plain baselines.
    Basic,
    /// Head keypoints get +0.15 m.
    HeadOffsets,
    /// Head offsets plus +0.10 m on the end-effector (tool).
    Tool,
}

pub const DEFAULT_S_P: &str = "0.05";
pub const DEFAULT_S_P_REDUCED: &str = "0.20";
pub const HEAD_OFFSET: &str = "0.15";
pub const TOOL_OFFSET: &str = "0.10";

pub fn preset_policy(scenario: PresetScenario) -> SeparationPolicy {
    let d = |s: &str| s.parse::<Decimal>().expect("literal");
    let mut policy = SeparationPolicy::new(
        d(DEFAULT_S_P),
        d(DEFAULT_S_P_REDUCED),
        measured_human_table(),
        measured_robot_table(),
    )
    .expect("preset policy is valid");
    if scenario != PresetScenario::Basic {
        for k in HEAD_KEYPOINTS {
            policy = policy.with_human_offset(k, d(HEAD_OFFSET)).expect("head keypoint");
        }
    }
    if scenario == PresetScenario::Tool {
        policy = policy
            .with_robot_offset("end_effector", d(TOOL_OFFSET))
            .expect("robot keypoint");
    }
    policy
}

/// Preset policy compiled over every human keypoint and the three robot keypoints.
pub fn preset_matrices(scenario: PresetScenario) -> ThresholdMatrices {
    preset_policy(scenario)
        .compile(&HUMAN_KEYPOINTS, &["elbow", "forearm", "end_effector"])
        .expect("complete tables")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    fn zero_policy() -> SeparationPolicy {
        let h = CompensationTable::from_literals(&[("nose", "0"), ("right_wrist", "0")]);
        let r = CompensationTable::from_literals(&[("end_effector", "0")]);
        SeparationPolicy::new(d("0.05"), d("0.20"), h, r).unwrap()
    }

    #[test]
    fn guaranteed_distance_cases() {
        let p = zero_policy();
        assert_eq!(
            p.guaranteed_distance("right_wrist", "end_effector", d("0.05")).unwrap(),
            d("0.05")
        );
        let p = p.with_human_offset("nose", d("0.15")).unwrap();
        assert_eq!(
            p.guaranteed_distance("nose", "end_effector", d("0.05")).unwrap(),
            d("0.20")
        );
        let p = zero_policy().with_robot_offset("end_effector", d("0.10")).unwrap();
        assert_eq!(
            p.guaranteed_distance("right_wrist", "end_effector", d("0.05")).unwrap(),
            d("0.15")
        );
    }

    #[test]
    fn keypoint_separation_cases() {
        let p = preset_policy(PresetScenario::Basic);
        assert_eq!(
            p.keypoint_separation("right_wrist", "end_effector", d("0.05")).unwrap(),
            d("0.26")
        );
        assert_eq!(
            p.keypoint_separation("nose", "end_effector", d("0.05")).unwrap(),
            d("0.21")
        );
        let c = preset_policy(PresetScenario::Tool);
        assert_eq!(
            c.keypoint_separation("nose", "end_effector", d("0.20")).unwrap(),
            d("0.61")
        );
    }

    #[test]
    fn velocity_term_adds_increment() {
        let p = zero_policy()
            .with_velocity_term(VelocityTerm {
                v_max: d("0.5"),
                t_react: d("0.1"),
                t_stop: d("0.3"),
            })
            .unwrap();
        assert_eq!(
            p.guaranteed_distance("nose", "end_effector", d("0.05")).unwrap(),
            d("0.25")
        );
        let m = p.compile(&["nose"], &["end_effector"]).unwrap();
        assert_eq!(m.stop("nose", "end_effector"), Some(d("0.25")));
        assert_eq!(m.reduced("nose", "end_effector"), Some(d("0.40")));
    }

    #[test]
    fn unknown_keypoints() {
        let p = zero_policy();
        assert_eq!(
            p.keypoint_separation("left_knee", "end_effector", d("0.05")),
            Err(PolicyError::UnknownKeypoint {
                agent: "human",
                name: "left_knee".into()
            })
        );
        assert!(matches!(
            p.compile(&["nose"], &["gripper"]),
            Err(PolicyError::UnknownKeypoint { agent: "robot", .. })
        ));
        assert!(p.clone().with_human_offset("left_knee", d("0.1")).is_err());
    }

    #[test]
    fn invalid_policies() {
        let h = CompensationTable::from_literals(&[("nose", "0")]);
        let r = CompensationTable::from_literals(&[("ee", "0")]);
        assert!(matches!(
            SeparationPolicy::new(d("-0.01"), d("0.2"), h.clone(), r.clone()),
            Err(PolicyError::Negative { .. })
        ));
        assert!(matches!(
            SeparationPolicy::new(d("0.3"), d("0.2"), h.clone(), r.clone()),
            Err(PolicyError::BaselineOrder { .. })
        ));
        let p = SeparationPolicy::new(d("0.05"), d("0.2"), h, r).unwrap();
        assert!(p.clone().with_human_offset("nose", d("-0.1")).is_err());
        let empty: [&str; 0] = [];
        assert_eq!(p.compile(&empty, &["ee"]), Err(PolicyError::EmptyKeypoints("human")));
    }

    #[test]
    fn preset_tables_reproduce() {
        let a = preset_matrices(PresetScenario::Basic);
        assert_eq!(a.stop("right_wrist", "end_effector"), Some(d("0.26")));
        assert_eq!(a.reduced("right_wrist", "end_effector"), Some(d("0.41")));
        assert_eq!(a.stop("nose", "end_effector"), Some(d("0.21")));
        assert_eq!(a.reduced("nose", "end_effector"), Some(d("0.36")));

        let b = preset_matrices(PresetScenario::HeadOffsets);
        assert_eq!(b.stop("nose", "end_effector"), Some(d("0.36")));
        assert_eq!(b.reduced("nose", "end_effector"), Some(d("0.51")));
        assert_eq!(b.stop("right_wrist", "end_effector"), Some(d("0.26")));
        assert_eq!(b.reduced("right_wrist", "end_effector"), Some(d("0.41")));

        let c = preset_matrices(PresetScenario::Tool);
        assert_eq!(c.stop("nose", "end_effector"), Some(d("0.46")));
        assert_eq!(c.reduced("nose", "end_effector"), Some(d("0.61")));
        assert_eq!(c.stop("right_wrist", "end_effector"), Some(d("0.36")));
        assert_eq!(c.reduced("right_wrist", "end_effector"), Some(d("0.51")));
    }

    #[test]
    fn head_offsets_touch_only_head_rows() {
        let a = preset_matrices(PresetScenario::Basic);
        let b = preset_matrices(PresetScenario::HeadOffsets);
        for h in a.humans() {
            let delta = if HEAD_KEYPOINTS.contains(&h.as_str()) {
                d("0.15")
            } else {
                Decimal::ZERO
            };
            for r in a.robots() {
                assert_eq!(b.stop(h, r).unwrap() - a.stop(h, r).unwrap(), delta);
                assert_eq!(b.reduced(h, r).unwrap() - a.reduced(h, r).unwrap(), delta);
            }
        }
    }
}
