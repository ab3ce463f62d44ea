//! Scenario configuration: TOML schema, validation, and bundled presets.
//!
//! See `docs/config.md` for the schema. Every error carries the dotted path
//! of the offending field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use nalgebra::Vector3;
use rust_decimal::Decimal;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use crate::body_model::{measured_human_table, measured_robot_table, BodyModel, BodySegment, CompensationTable};
use crate::geometry::{AffineTransform, Point3};
use crate::io::formats::parse_compensation_csv;
use crate::io::trace::{parse_trace, TraceAgent};
use crate::kinematics::{nao_left_arm, Joint, JointChain, KeypointAttachment, NAO_LEFT_ARM};
use crate::monitor::{MissingMode, MissingPolicy, MonitorSettings, SpeedFactors};
use crate::policy::{SeparationPolicy, ThresholdMatrices, VelocityTerm};
use crate::simulation::{HumanTrajectory, ReplayTrace, RobotMotionProfile, SkeletonLayout, SyntheticApproach};

pub const PRESET_NAMES: [&str; 3] = ["paper-scenario-a", "paper-scenario-b", "paper-scenario-c"];
pub const HUMAN_TABLE_PRESET: &str = "measured-human";
pub const ROBOT_TABLE_PRESET: &str = "measured-robot";

const AXIS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{}", located(path, message))]
    Invalid { path: String, message: String },
    #[error("cannot read `{file}`: {message}")]
    Read { file: String, message: String },
}

fn located(path: &str, message: &str) -> String {
    if path.is_empty() {
        message.to_string()
    } else {
        format!("`{path}`: {message}")
    }
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Dotted path of the offending field (empty for read errors).
    pub fn path(&self) -> &str {
        match self {
            ConfigError::Invalid { path, .. } => path,
            ConfigError::Read { .. } => "",
        }
    }
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub frame_rate: f64,
    pub duration: f64,
    pub seed: u64,
    pub actuation_delay_frames: usize,
    pub chain: JointChain,
    pub attachments: Vec<KeypointAttachment>,
    pub motion: RobotMotionProfile,
    pub policy: SeparationPolicy,
    pub monitor: MonitorSettings,
    pub human: HumanTrajectory,
    /// Standard deviation (m) of Gaussian noise added to human keypoints.
    pub noise_std: f64,
}

impl ScenarioConfig {
    /// Threshold matrices over the human compensation table and the robot
    /// attachments, in their configured order.
    pub fn matrices(&self) -> ThresholdMatrices {
        let humans: Vec<&str> = self.policy.h_compen().names().collect();
        let robots: Vec<&str> = self.attachments.iter().map(|a| a.name.as_str()).collect();
        self.policy.compile(&humans, &robots).expect("validated at load time")
    }
}

/// Robot keypoint names accept `wrist` for `forearm`.
pub fn canonical_robot_name(name: &str) -> &str {
    match name {
        "wrist" => "forearm",
        other => other,
    }
}

fn default_frame_rate() -> f64 {
    30.0
}

fn default_duration() -> f64 {
    30.0
}

fn default_delay() -> usize {
    1
}

fn default_reduced_factor() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    #[serde(default = "default_frame_rate")]
    frame_rate: f64,
    #[serde(default = "default_duration")]
    duration: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_delay")]
    actuation_delay_frames: usize,
    robot: RawRobot,
    policy: RawPolicy,
    #[serde(default)]
    monitor: RawMonitor,
    human: RawHuman,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobot {
    chain: Option<String>,
    base_translation: Option<[f64; 3]>,
    base_rotation: Option<[f64; 3]>,
    joints: Option<Vec<RawJoint>>,
    attachments: Option<Vec<RawAttachment>>,
    motion: RawMotion,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum RawJointType {
    Revolute,
    Prismatic,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJoint {
    axis: [f64; 3],
    #[serde(rename = "type")]
    joint_type: RawJointType,
    #[serde(default)]
    fixed_rotation: [f64; 3],
    #[serde(default)]
    fixed_translation: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttachment {
    name: String,
    link: usize,
    #[serde(default)]
    offset: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMotion {
    amplitude: Vec<f64>,
    center: Option<Vec<f64>>,
    period: f64,
    #[serde(default)]
    phase: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawTable {
    Named(String),
    Inline(IndexMap<String, Decimal>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    s_p: Decimal,
    s_p_reduced: Decimal,
    h_compen: RawTable,
    r_compen: RawTable,
    #[serde(default)]
    h_s: IndexMap<String, Decimal>,
    #[serde(default)]
    r_s: IndexMap<String, Decimal>,
    velocity_term: Option<RawVelocity>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVelocity {
    v_max: Decimal,
    t_react: Decimal,
    t_stop: Decimal,
}

#[derive(Debug, Deserialize, Default, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum RawMissing {
    #[default]
    Conservative,
    HoldLast,
    Ignore,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMonitor {
    #[serde(default)]
    missing: RawMissing,
    hold_time: Option<f64>,
    #[serde(default)]
    confidence_floor: f64,
    #[serde(default)]
    hysteresis: f64,
    #[serde(default = "default_reduced_factor")]
    reduced_speed_factor: f64,
}

impl Default for RawMonitor {
    fn default() -> Self {
        Self {
            missing: RawMissing::default(),
            hold_time: None,
            confidence_floor: 0.0,
            hysteresis: 0.0,
            reduced_speed_factor: default_reduced_factor(),
        }
    }
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum RawTrajectoryKind {
    Synthetic,
    Replay,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHuman {
    trajectory: RawTrajectoryKind,
    layout: Option<String>,
    start: Option<[f64; 3]>,
    target: Option<[f64; 3]>,
    approach_start: Option<f64>,
    approach_speed: Option<f64>,
    dwell: Option<f64>,
    retreat_speed: Option<f64>,
    trace: Option<String>,
    #[serde(default)]
    noise_std: f64,
}

fn deserialize<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::at("", e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ConfigError::at(path, e.into_inner().message().to_string())
    })
}

fn finite(path: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::at(path, "must be finite"))
    }
}

fn positive(path: &str, v: f64) -> Result<f64, ConfigError> {
    if finite(path, v)? > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::at(path, format!("must be positive, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<f64, ConfigError> {
    if finite(path, v)? >= 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::at(path, format!("must be non-negative, got {v}")))
    }
}

fn non_negative_decimal(path: &str, v: Decimal) -> Result<Decimal, ConfigError> {
    if v.is_sign_negative() && !v.is_zero() {
        Err(ConfigError::at(path, format!("must be non-negative, got {v}")))
    } else {
        Ok(v)
    }
}

fn vector(path: &str, v: [f64; 3]) -> Result<Vector3<f64>, ConfigError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(Vector3::from(v))
    } else {
        Err(ConfigError::at(path, "components must be finite"))
    }
}

fn required<T>(path: &str, v: Option<T>) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::at(path, "missing field"))
}

fn read_file(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        file: path.display().to_string(),
        message: e.to_string(),
    })
}

fn resolve(base_dir: Option<&Path>, file: &str) -> PathBuf {
    match base_dir {
        Some(dir) if Path::new(file).is_relative() => dir.join(file),
        _ => PathBuf::from(file),
    }
}

fn build_robot(raw: RawRobot) -> Result<(JointChain, Vec<KeypointAttachment>, RobotMotionProfile), ConfigError> {
    let (chain, default_attachments) = match (&raw.chain, &raw.joints) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::at(
                "robot.joints",
                "not allowed together with `robot.chain`",
            ))
        }
        (None, None) => return Err(ConfigError::at("robot", "needs either `chain` or `joints`")),
        (Some(name), None) => {
            if raw.base_translation.is_some() || raw.base_rotation.is_some() {
                return Err(ConfigError::at(
                    "robot.chain",
                    "a chain preset fixes its own base transform",
                ));
            }
            if name != NAO_LEFT_ARM {
                return Err(ConfigError::at(
                    "robot.chain",
                    format!("unknown chain preset `{name}` (expected `{NAO_LEFT_ARM}`)"),
                ));
            }
            let (chain, attachments) = nao_left_arm();
            (chain, Some(attachments))
        }
        (None, Some(raw_joints)) => {
            let base = AffineTransform::from_rotation_vector(
                &vector("robot.base_rotation", raw.base_rotation.unwrap_or_default())?,
                vector("robot.base_translation", raw.base_translation.unwrap_or_default())?,
            );
            let mut joints = Vec::with_capacity(raw_joints.len());
            for (i, j) in raw_joints.iter().enumerate() {
                let axis = vector(&format!("robot.joints[{i}].axis"), j.axis)?;
                if (axis.norm() - 1.0).abs() > AXIS_TOLERANCE {
                    return Err(ConfigError::at(
                        format!("robot.joints[{i}].axis"),
                        format!("must be a unit vector, norm is {}", axis.norm()),
                    ));
                }
                let fixed = AffineTransform::from_rotation_vector(
                    &vector(&format!("robot.joints[{i}].fixed_rotation"), j.fixed_rotation)?,
                    vector(&format!("robot.joints[{i}].fixed_translation"), j.fixed_translation)?,
                );
                joints.push(match j.joint_type {
                    RawJointType::Revolute => Joint::revolute(axis, fixed),
                    RawJointType::Prismatic => Joint::prismatic(axis, fixed),
                });
            }
            let chain = JointChain::new(base, joints).map_err(|e| ConfigError::at("robot.joints", e.to_string()))?;
            (chain, None)
        }
    };

    let attachments = match raw.attachments {
        Some(list) => {
            let mut out: Vec<KeypointAttachment> = Vec::with_capacity(list.len());
            for (i, a) in list.into_iter().enumerate() {
                let name = canonical_robot_name(&a.name).to_string();
                if out.iter().any(|o| o.name == name) {
                    return Err(ConfigError::at(
                        format!("robot.attachments[{i}].name"),
                        format!("duplicate keypoint `{name}`"),
                    ));
                }
                if a.link > chain.joint_count() {
                    return Err(ConfigError::at(
                        format!("robot.attachments[{i}].link"),
                        format!("link {} exceeds the chain's {} joints", a.link, chain.joint_count()),
                    ));
                }
                let offset = vector(&format!("robot.attachments[{i}].offset"), a.offset)?;
                out.push(KeypointAttachment::new(name, a.link, Point3::from(offset)));
            }
            out
        }
        None => default_attachments.ok_or_else(|| ConfigError::at("robot.attachments", "missing field"))?,
    };
    if attachments.is_empty() {
        return Err(ConfigError::at(
            "robot.attachments",
            "at least one attachment is required",
        ));
    }

    let n = chain.joint_count();
    let m = raw.motion;
    if m.amplitude.len() != n {
        return Err(ConfigError::at(
            "robot.motion.amplitude",
            format!("expected {n} values, found {}", m.amplitude.len()),
        ));
    }
    for (i, a) in m.amplitude.iter().enumerate() {
        finite(&format!("robot.motion.amplitude[{i}]"), *a)?;
    }
    let center = m.center.unwrap_or_else(|| vec![0.0; n]);
    if center.len() != n {
        return Err(ConfigError::at(
            "robot.motion.center",
            format!("expected {n} values, found {}", center.len()),
        ));
    }
    for (i, c) in center.iter().enumerate() {
        finite(&format!("robot.motion.center[{i}]"), *c)?;
    }
    let mut motion = RobotMotionProfile::new(m.amplitude, center, positive("robot.motion.period", m.period)?);
    motion.phase = finite("robot.motion.phase", m.phase)?;
    Ok((chain, attachments, motion))
}

fn build_table(
    path: &str,
    raw: RawTable,
    preset_name: &str,
    preset: fn() -> CompensationTable,
    robot: bool,
    base_dir: Option<&Path>,
) -> Result<CompensationTable, ConfigError> {
    let entries: IndexMap<String, Decimal> = match raw {
        RawTable::Named(name) if name == preset_name => return Ok(preset()),
        RawTable::Named(file) => {
            let text = read_file(&resolve(base_dir, &file))?;
            let table = parse_compensation_csv(&text).map_err(|e| ConfigError::at(path, format!("{file}: {e}")))?;
            table.iter().map(|(k, v)| (k.to_string(), v)).collect()
        }
        RawTable::Inline(map) => map,
    };
    let mut out = IndexMap::new();
    for (k, v) in entries {
        let key = if robot {
            canonical_robot_name(&k).to_string()
        } else {
            k.clone()
        };
        non_negative_decimal(&format!("{path}.{k}"), v)?;
        if out.insert(key.clone(), v).is_some() {
            return Err(ConfigError::at(
                format!("{path}.{k}"),
                format!("duplicate keypoint `{key}`"),
            ));
        }
    }
    if out.is_empty() {
        return Err(ConfigError::at(path, "table is empty"));
    }
    CompensationTable::new(out).map_err(|e| ConfigError::at(path, e.to_string()))
}

fn build_policy(raw: RawPolicy, base_dir: Option<&Path>) -> Result<SeparationPolicy, ConfigError> {
    let s_p = non_negative_decimal("policy.s_p", raw.s_p)?;
    let s_p_reduced = non_negative_decimal("policy.s_p_reduced", raw.s_p_reduced)?;
    if s_p > s_p_reduced {
        return Err(ConfigError::at(
            "policy.s_p_reduced",
            format!("must be at least s_p ({s_p}), got {s_p_reduced}"),
        ));
    }
    let h = build_table(
        "policy.h_compen",
        raw.h_compen,
        HUMAN_TABLE_PRESET,
        measured_human_table,
        false,
        base_dir,
    )?;
    let r = build_table(
        "policy.r_compen",
        raw.r_compen,
        ROBOT_TABLE_PRESET,
        measured_robot_table,
        true,
        base_dir,
    )?;
    let mut policy =
        SeparationPolicy::new(s_p, s_p_reduced, h, r).map_err(|e| ConfigError::at("policy", e.to_string()))?;
    for (k, v) in raw.h_s {
        let path = format!("policy.h_s.{k}");
        non_negative_decimal(&path, v)?;
        policy = policy
            .with_human_offset(&k, v)
            .map_err(|_| ConfigError::at(&path, "keypoint is not in `policy.h_compen`"))?;
    }
    for (k, v) in raw.r_s {
        let path = format!("policy.r_s.{k}");
        non_negative_decimal(&path, v)?;
        policy = policy
            .with_robot_offset(canonical_robot_name(&k), v)
            .map_err(|_| ConfigError::at(&path, "keypoint is not in `policy.r_compen`"))?;
    }
    if let Some(vt) = raw.velocity_term {
        let term = VelocityTerm {
            v_max: non_negative_decimal("policy.velocity_term.v_max", vt.v_max)?,
            t_react: non_negative_decimal("policy.velocity_term.t_react", vt.t_react)?,
            t_stop: non_negative_decimal("policy.velocity_term.t_stop", vt.t_stop)?,
        };
        policy = policy
            .with_velocity_term(term)
            .map_err(|e| ConfigError::at("policy.velocity_term", e.to_string()))?;
    }
    Ok(policy)
}

fn build_monitor(raw: RawMonitor) -> Result<MonitorSettings, ConfigError> {
    let mode = match raw.missing {
        RawMissing::Conservative | RawMissing::Ignore if raw.hold_time.is_some() => {
            return Err(ConfigError::at(
                "monitor.hold_time",
                "only valid with `missing = \"hold-last\"`",
            ))
        }
        RawMissing::Conservative => MissingMode::Conservative,
        RawMissing::Ignore => MissingMode::Ignore,
        RawMissing::HoldLast => MissingMode::HoldLast {
            hold: non_negative("monitor.hold_time", required("monitor.hold_time", raw.hold_time)?)?,
        },
    };
    let floor = finite("monitor.confidence_floor", raw.confidence_floor)?;
    if !(0.0..=1.0).contains(&floor) {
        return Err(ConfigError::at("monitor.confidence_floor", "must lie in [0, 1]"));
    }
    let reduced = finite("monitor.reduced_speed_factor", raw.reduced_speed_factor)?;
    if !(0.0..=1.0).contains(&reduced) {
        return Err(ConfigError::at("monitor.reduced_speed_factor", "must lie in [0, 1]"));
    }
    Ok(MonitorSettings {
        missing: MissingPolicy {
            mode,
            confidence_floor: floor,
        },
        hysteresis: non_negative("monitor.hysteresis", raw.hysteresis)?,
        speed: SpeedFactors {
            reduced,
            ..SpeedFactors::default()
        },
    })
}

fn build_human(
    raw: RawHuman,
    h_compen: &CompensationTable,
    base_dir: Option<&Path>,
) -> Result<HumanTrajectory, ConfigError> {
    let check_name = |path: &str, name: &str| {
        if h_compen.contains(name) {
            Ok(())
        } else {
            Err(ConfigError::at(
                path,
                format!("human keypoint `{name}` is not in `policy.h_compen`"),
            ))
        }
    };
    match raw.trajectory {
        RawTrajectoryKind::Synthetic => {
            if raw.trace.is_some() {
                return Err(ConfigError::at(
                    "human.trace",
                    "only valid with `trajectory = \"replay\"`",
                ));
            }
            let layout_name = required("human.layout", raw.layout)?;
            let layout = SkeletonLayout::from_name(&layout_name).ok_or_else(|| {
                ConfigError::at(
                    "human.layout",
                    format!("unknown layout `{layout_name}` (expected `arm-forward` or `head-forward`)"),
                )
            })?;
            for (name, _) in layout.offsets() {
                check_name("human.layout", &name)?;
            }
            Ok(HumanTrajectory::Synthetic(SyntheticApproach::with_layout(
                layout,
                Point3::from(vector("human.start", required("human.start", raw.start)?)?),
                Point3::from(vector("human.target", required("human.target", raw.target)?)?),
                non_negative(
                    "human.approach_start",
                    required("human.approach_start", raw.approach_start)?,
                )?,
                positive(
                    "human.approach_speed",
                    required("human.approach_speed", raw.approach_speed)?,
                )?,
                non_negative("human.dwell", required("human.dwell", raw.dwell)?)?,
                positive(
                    "human.retreat_speed",
                    required("human.retreat_speed", raw.retreat_speed)?,
                )?,
            )))
        }
        RawTrajectoryKind::Replay => {
            for (field, set) in [
                ("layout", raw.layout.is_some()),
                ("start", raw.start.is_some()),
                ("target", raw.target.is_some()),
                ("approach_start", raw.approach_start.is_some()),
                ("approach_speed", raw.approach_speed.is_some()),
                ("dwell", raw.dwell.is_some()),
                ("retreat_speed", raw.retreat_speed.is_some()),
            ] {
                if set {
                    return Err(ConfigError::at(
                        format!("human.{field}"),
                        "only valid with `trajectory = \"synthetic\"`",
                    ));
                }
            }
            let file = required("human.trace", raw.trace)?;
            let bytes = std::fs::read(resolve(base_dir, &file)).map_err(|e| ConfigError::Read {
                file: file.clone(),
                message: e.to_string(),
            })?;
            let records = parse_trace(&bytes).map_err(|e| ConfigError::at("human.trace", format!("{file}: {e}")))?;
            for r in records.iter().filter(|r| r.agent == TraceAgent::Human) {
                check_name("human.trace", &r.keypoint)?;
            }
            Ok(HumanTrajectory::Replay(ReplayTrace::from_records(&records)))
        }
    }
}

/// Parses and validates a configuration; relative file references resolve
/// against the working directory.
pub fn load_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    load_config_in(text, None)
}

/// Like [`load_config`], resolving relative file references against `base_dir`.
pub fn load_config_in(text: &str, base_dir: Option<&Path>) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = deserialize(text)?;
    let frame_rate = positive("frame_rate", raw.frame_rate)?;
    let duration = non_negative("duration", raw.duration)?;
    if raw.actuation_delay_frames == 0 {
        return Err(ConfigError::at("actuation_delay_frames", "must be at least 1"));
    }
    let (chain, attachments, motion) = build_robot(raw.robot)?;
    let policy = build_policy(raw.policy, base_dir)?;
    for (i, a) in attachments.iter().enumerate() {
        if !policy.r_compen().contains(&a.name) {
            return Err(ConfigError::at(
                format!("robot.attachments[{i}].name"),
                format!("robot keypoint `{}` is not in `policy.r_compen`", a.name),
            ));
        }
    }
    let monitor = build_monitor(raw.monitor)?;
    let noise_std = non_negative("human.noise_std", raw.human.noise_std)?;
    let human = build_human(raw.human, policy.h_compen(), base_dir)?;
    Ok(ScenarioConfig {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        frame_rate,
        duration,
        seed: raw.seed,
        actuation_delay_frames: raw.actuation_delay_frames,
        chain,
        attachments,
        motion,
        policy,
        monitor,
        human,
        noise_std,
    })
}

pub fn load_config_file(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = read_file(path)?;
    load_config_in(&text, path.parent())
}

/// TOML source of a bundled preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    match name {
        "paper-scenario-a" => Some(include_str!("../../presets/paper-scenario-a.toml")),
        "paper-scenario-b" => Some(include_str!("../../presets/paper-scenario-b.toml")),
        "paper-scenario-c" => Some(include_str!("../../presets/paper-scenario-c.toml")),
        _ => None,
    }
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    preset_source(name).map(|src| load_config(src).expect("bundled presets are valid"))
}

/// A preset name or a path to a configuration file.
pub fn resolve_config(arg: &str) -> Result<ScenarioConfig, ConfigError> {
    match preset(arg) {
        Some(cfg) => Ok(cfg),
        None => load_config_file(Path::new(arg)),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBody {
    keypoints: BTreeMap<String, [f64; 3]>,
    #[serde(default)]
    segments: Vec<RawSegment>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    name: String,
    sphere: Option<RawSphere>,
    capsule: Option<RawCapsule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSphere {
    center: [f64; 3],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCapsule {
    a: [f64; 3],
    b: [f64; 3],
    radius: f64,
}

/// Parses a body model: named keypoints plus sphere/capsule segments.
pub fn load_body_model(text: &str) -> Result<BodyModel, ConfigError> {
    let raw: RawBody = deserialize(text)?;
    let mut keypoints = BTreeMap::new();
    for (name, p) in raw.keypoints {
        let v = vector(&format!("keypoints.{name}"), p)?;
        keypoints.insert(name, Point3::from(v));
    }
    let mut segments = Vec::with_capacity(raw.segments.len());
    for (i, s) in raw.segments.into_iter().enumerate() {
        let path = format!("segments[{i}]");
        let seg = match (s.sphere, s.capsule) {
            (Some(sp), None) => BodySegment::sphere(
                s.name,
                Point3::from(vector(&format!("{path}.sphere.center"), sp.center)?),
                non_negative(&format!("{path}.sphere.radius"), sp.radius)?,
            ),
            (None, Some(c)) => BodySegment::capsule(
                s.name,
                Point3::from(vector(&format!("{path}.capsule.a"), c.a)?),
                Point3::from(vector(&format!("{path}.capsule.b"), c.b)?),
                non_negative(&format!("{path}.capsule.radius"), c.radius)?,
            ),
            _ => return Err(ConfigError::at(path, "needs exactly one of `sphere` or `capsule`")),
        };
        segments.push(seg);
    }
    BodyModel::new(keypoints, segments).map_err(|e| ConfigError::at("", e.to_string()))
}
