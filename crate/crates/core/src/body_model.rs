//! Volumetric body models and keypoint compensation coefficients.
//!
//! A keypoint's compensation coefficient is the largest distance from the
//! keypoint to any part of the body volume that is nearer to it than to any
//! other keypoint. Checking keypoint distances against thresholds inflated by
//! these coefficients then bounds the distance between whole bodies.
//!
//! Coefficients are computed by sampling each segment on a lattice with
//! spacing at most `sampling_step` laid out in a frame attached to the
//! segment (so results do not depend on how the model is placed in space).
//! Lattice points outside a segment are projected onto it. Every body point
//! then lies within the lattice covering radius `h` of some sample, and a
//! sample also contributes to any keypoint that is at most `2h` farther than
//! its nearest one, which is enough for
//! `distance(p, nearest keypoint k) <= coefficient(k) + h` to hold for every
//! body point `p`, with `h < sampling_step`. Coarser lattices are consulted
//! too, with a discount, so that refining the step behaves predictably.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rust_decimal::prelude::{FromPrimitive, ToPrimitive};
use rust_decimal::{Decimal, RoundingStrategy};
use thiserror::Error;

use crate::geometry::Point3;

pub const DEFAULT_SAMPLING_STEP: f64 = 0.005;

/// Decimal places kept for computed coefficients (rounded up).
const COEFFICIENT_DP: u32 = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BodyModelError {
    #[error("body model has no keypoints")]
    EmptyModel,
    #[error("sampling step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("segment `{0}`: {1}")]
    BadSegment(String, &'static str),
    #[error("coefficient for `{0}` must be non-negative")]
    NegativeCoefficient(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere {
        center: Point3<f64>,
        radius: f64,
    },
    Capsule {
        a: Point3<f64>,
        b: Point3<f64>,
        radius: f64,
    },
}

impl Shape {
    fn radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius, .. } | Shape::Capsule { radius, .. } => radius,
        }
    }

    fn center(&self) -> Point3<f64> {
        match *self {
            Shape::Sphere { center, .. } => center,
            Shape::Capsule { a, b, .. } => nalgebra::center(&a, &b),
        }
    }

    /// Closest point of the (solid) shape to `p`.
    pub fn project(&self, p: &Point3<f64>) -> Point3<f64> {
        match *self {
            Shape::Sphere { center, radius } => clamp_to_ball(p, &center, radius),
            Shape::Capsule { a, b, radius } => {
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                clamp_to_ball(p, &(a + ab * t), radius)
            }
        }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        match *self {
            Shape::Sphere { center, radius } => (p - center).norm() <= radius,
            Shape::Capsule { a, b, radius } => {
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - (a + ab * t)).norm() <= radius
            }
        }
    }

    fn transformed(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Shape {
        match *self {
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: f(&center),
                radius,
            },
            Shape::Capsule { a, b, radius } => Shape::Capsule {
                a: f(&a),
                b: f(&b),
                radius,
            },
        }
    }
}

fn clamp_to_ball(p: &Point3<f64>, center: &Point3<f64>, radius: f64) -> Point3<f64> {
    let d = p - center;
    let n = d.norm();
    if n <= radius {
        *p
    } else {
        center + d * (radius / n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodySegment {
    pub name: String,
    pub shape: Shape,
}

impl BodySegment {
    pub fn sphere(name: impl Into<String>, center: Point3<f64>, radius: f64) -> Self {
        Self {
            name: name.into(),
            shape: Shape::Sphere { center, radius },
        }
    }

    pub fn capsule(name: impl Into<String>, a: Point3<f64>, b: Point3<f64>, radius: f64) -> Self {
        Self {
            name: name.into(),
            shape: Shape::Capsule { a, b, radius },
        }
    }

    fn validate(&self) -> Result<(), BodyModelError> {
        let bad = |why| Err(BodyModelError::BadSegment(self.name.clone(), why));
        let r = self.shape.radius();
        if !(r.is_finite() && r >= 0.0) {
            return bad("radius must be finite and non-negative");
        }
        match &self.shape {
            Shape::Sphere { center, .. } if !center.iter().all(|v| v.is_finite()) => bad("non-finite center"),
            Shape::Capsule { a, b, .. } => {
                if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
                    bad("non-finite endpoint")
                } else if a == b {
                    bad("capsule endpoints coincide")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Keypoints (reference pose) plus the volume they stand for.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    pub keypoints: BTreeMap<String, Point3<f64>>,
    pub segments: Vec<BodySegment>,
}

impl BodyModel {
    pub fn new(keypoints: BTreeMap<String, Point3<f64>>, segments: Vec<BodySegment>) -> Result<Self, BodyModelError> {
        if keypoints.is_empty() {
            return Err(BodyModelError::EmptyModel);
        }
        for s in &segments {
            s.validate()?;
        }
        Ok(Self { keypoints, segments })
    }

    /// Same model with every point mapped through `f` (expected rigid).
    pub fn map_points(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> BodyModel {
        BodyModel {
            keypoints: self.keypoints.iter().map(|(k, p)| (k.clone(), f(p))).collect(),
            segments: self
                .segments
                .iter()
                .map(|s| BodySegment {
                    name: s.name.clone(),
                    shape: s.shape.transformed(&f),
                })
                .collect(),
        }
    }
}

/// Per-keypoint compensation coefficients in meters.
///
/// `slack` is the sampling tolerance the table was computed with; preset
/// tables have zero slack.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompensationTable {
    coefficients: IndexMap<String, Decimal>,
    slack: f64,
}

impl CompensationTable {
    pub fn new(coefficients: IndexMap<String, Decimal>) -> Result<Self, BodyModelError> {
        if let Some((k, _)) = coefficients.iter().find(|(_, v)| v.is_sign_negative() && !v.is_zero()) {
            return Err(BodyModelError::NegativeCoefficient(k.clone()));
        }
        Ok(Self {
            coefficients,
            slack: 0.0,
        })
    }

    /// Table from `(name, decimal literal)` pairs. Panics on malformed input,
    /// so only meant for built-in presets.
    pub fn from_literals(entries: &[(&str, &str)]) -> Self {
        let coefficients = entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.parse::<Decimal>().expect("valid decimal literal")))
            .collect();
        Self::new(coefficients).expect("non-negative literals")
    }

    pub fn with_slack(mut self, slack: f64) -> Self {
        self.slack = slack;
        self
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn get(&self, name: &str) -> Option<Decimal> {
        self.coefficients.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.coefficients.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.coefficients.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Decimal)> {
        self.coefficients.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Sets every coefficient to zero, keeping names and slack.
    pub fn zeroed(&self) -> Self {
        Self {
            coefficients: self.coefficients.keys().map(|k| (k.clone(), Decimal::ZERO)).collect(),
            slack: self.slack,
        }
    }
}

/// Human keypoint names in OpenPose COCO order.
pub const HUMAN_KEYPOINTS: [&str; 18] = [
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
];

/// Keypoints treated as the human head.
pub const HEAD_KEYPOINTS: [&str; 6] = ["nose", "neck", "left_eye", "right_eye", "left_ear", "right_ear"];

/// Measured human coefficients, per body part; both sides share a value.
pub fn measured_human_table() -> CompensationTable {
    let part_value = |name: &str| -> &'static str {
        let part = name.trim_start_matches("left_").trim_start_matches("right_");
        match part {
            "nose" | "eye" | "ear" => "0.10",
            "neck" => "0.25",
            "shoulder" | "elbow" | "wrist" => "0.15",
            _ => "0.00",
        }
    };
    let entries: Vec<(&str, &str)> = HUMAN_KEYPOINTS.iter().map(|k| (*k, part_value(k))).collect();
    CompensationTable::from_literals(&entries)
}

/// Measured robot coefficients. The table's "wrist" is the `forearm` keypoint.
pub fn measured_robot_table() -> CompensationTable {
    CompensationTable::from_literals(&[("elbow", "0.06"), ("forearm", "0.05"), ("end_effector", "0.06")])
}

/// Name of the keypoint nearest to `p`; ties go to the lexicographically
/// smallest name. `None` only for an empty set.
pub fn assign_nearest<'a>(p: &Point3<f64>, keypoints: &'a BTreeMap<String, Point3<f64>>) -> Option<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    // BTreeMap iterates in name order, so strict `<` keeps the smallest name on ties.
    for (name, k) in keypoints {
        let d = (p - k).norm_squared();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((name.as_str(), d));
        }
    }
    best.map(|(n, _)| n)
}

/// Orthonormal frame for sampling a segment, built only from the model's
/// own geometry so a rigid motion of the model moves the lattice with it.
fn sampling_frame(shape: &Shape, keypoints: &[Point3<f64>]) -> Matrix3<f64> {
    let origin = shape.center();
    let mut candidates: Vec<Vector3<f64>> = Vec::new();
    if let Shape::Capsule { a, b, .. } = shape {
        candidates.push(b - a);
    }
    candidates.extend(keypoints.iter().map(|k| k - origin));
    candidates.extend([Vector3::x(), Vector3::y(), Vector3::z()]);

    let mut basis: Vec<Vector3<f64>> = Vec::with_capacity(3);
    for c in candidates {
        let scale = c.norm();
        if scale == 0.0 {
            continue;
        }
        let mut v = c;
        for e in &basis {
            v -= e * e.dot(&v);
        }
        if v.norm() > 1e-6 * scale {
            basis.push(v.normalize());
            if basis.len() == 3 {
                break;
            }
        }
    }
    Matrix3::from_columns(&[basis[0], basis[1], basis[2]])
}

/// Evenly spaced values covering `[lo, hi]` with spacing at most `step`.
fn axis_samples(lo: f64, hi: f64, step: f64) -> (Vec<f64>, f64) {
    let extent = hi - lo;
    let n = (extent / step).ceil().max(0.0) as usize;
    if n == 0 {
        return (vec![0.5 * (lo + hi)], 0.0);
    }
    let spacing = extent / n as f64;
    ((0..=n).map(|i| lo + spacing * i as f64).collect(), spacing)
}

/// Projected lattice samples of one segment and their covering radius.
fn segment_samples(shape: &Shape, frame: &Matrix3<f64>, step: f64) -> (Vec<Point3<f64>>, f64) {
    let r = shape.radius();
    let (lo, hi) = match shape {
        Shape::Sphere { .. } => (Vector3::repeat(-r), Vector3::repeat(r)),
        Shape::Capsule { a, b, .. } => {
            // frame column 0 is the capsule axis
            let half = 0.5 * (b - a).norm();
            (Vector3::new(-half - r, -r, -r), Vector3::new(half + r, r, r))
        }
    };
    let origin = shape.center();
    let (xs, gx) = axis_samples(lo.x, hi.x, step);
    let (ys, gy) = axis_samples(lo.y, hi.y, step);
    let (zs, gz) = axis_samples(lo.z, hi.z, step);
    let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                let p = origin + frame * Vector3::new(x, y, z);
                out.push(shape.project(&p));
            }
        }
    }
    let covering = 0.5 * (gx * gx + gy * gy + gz * gz).sqrt();
    (out, covering)
}

/// Conservative per-keypoint estimate from one lattice resolution, plus an
/// upper bound on the distance from any body point to its nearest keypoint.
fn lattice_estimate(model: &BodyModel, points: &[Point3<f64>], step: f64) -> (Vec<f64>, f64) {
    let mut best = vec![0.0f64; points.len()];
    let mut dist = vec![0.0f64; points.len()];
    let mut reach = 0.0f64;
    for segment in &model.segments {
        let frame = sampling_frame(&segment.shape, points);
        let (samples, covering) = segment_samples(&segment.shape, &frame, step);
        let band = 2.0 * covering;
        for s in &samples {
            let mut nearest = f64::INFINITY;
            for (d, k) in dist.iter_mut().zip(points) {
                *d = (s - k).norm();
                nearest = nearest.min(*d);
            }
            reach = reach.max(nearest + covering);
            // A body point p within `covering` of s whose nearest keypoint is k
            // has d(p, k) <= d(p, n_s) <= nearest + covering, and can only
            // exist when d(s, k) <= nearest + band.
            for (b, &d) in best.iter_mut().zip(&dist) {
                if d <= nearest + band && nearest > *b {
                    *b = nearest;
                }
            }
        }
    }
    (best, reach)
}

/// Compensation coefficients of every model keypoint.
///
/// A coarse lattice can flag a keypoint whose region the body only grazes.
/// Estimates from the coarser lattices `step * 2^m` are kept, less
/// `(2^m - 1) * step`, so halving the step never lowers a coefficient by
/// more than half a step.
pub fn compute_compensation(model: &BodyModel, sampling_step: f64) -> Result<CompensationTable, BodyModelError> {
    if !(sampling_step.is_finite() && sampling_step > 0.0) {
        return Err(BodyModelError::BadStep(sampling_step));
    }
    if model.keypoints.is_empty() {
        return Err(BodyModelError::EmptyModel);
    }
    let names: Vec<&String> = model.keypoints.keys().collect();
    let points: Vec<Point3<f64>> = model.keypoints.values().copied().collect();
    let (mut best, reach) = lattice_estimate(model, &points, sampling_step);

    // Every estimate is at most `reach`, so levels past it cannot contribute.
    let mut scale = 2.0;
    while (scale - 1.0) * sampling_step < reach {
        let (coarse, _) = lattice_estimate(model, &points, scale * sampling_step);
        let discount = (scale - 1.0) * sampling_step;
        for (b, c) in best.iter_mut().zip(coarse) {
            *b = b.max(c - discount);
        }
        scale *= 2.0;
    }

    let coefficients = names
        .into_iter()
        .zip(best)
        .map(|(name, c)| {
            let dec = Decimal::from_f64(c)
                .unwrap_or(Decimal::ZERO)
                .round_dp_with_strategy(COEFFICIENT_DP, RoundingStrategy::AwayFromZero);
            (name.clone(), dec)
        })
        .collect();
    Ok(CompensationTable {
        coefficients,
        slack: sampling_step,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest `distance - (coefficient + slack)` seen; negative when covered.
    pub worst_excess: f64,
    /// First offending point and its nearest keypoint, if any.
    pub first_violation: Option<(Point3<f64>, String)>,
}

/// Uniform point inside `shape` by rejection from its bounding box.
fn sample_inside<R: Rng + ?Sized>(shape: &Shape, rng: &mut R) -> Point3<f64> {
    let r = shape.radius();
    match *shape {
        Shape::Sphere { center, .. } if r == 0.0 => center,
        Shape::Capsule { a, b, .. } if r == 0.0 => a + (b - a) * rng.random::<f64>(),
        _ => {
            let (lo, hi) = match *shape {
                Shape::Sphere { center, .. } => (center.coords.add_scalar(-r), center.coords.add_scalar(r)),
                Shape::Capsule { a, b, .. } => (
                    a.coords.inf(&b.coords).add_scalar(-r),
                    a.coords.sup(&b.coords).add_scalar(r),
                ),
            };
            loop {
                let p = Point3::new(
                    rng.random_range(lo.x..=hi.x),
                    rng.random_range(lo.y..=hi.y),
                    rng.random_range(lo.z..=hi.z),
                );
                if shape.contains(&p) {
                    return p;
                }
            }
        }
    }
}

/// Monte-Carlo check that every sampled body point is within its nearest
/// keypoint's coefficient (plus the table's slack).
pub fn verify_coverage<R: Rng + ?Sized>(
    model: &BodyModel,
    table: &CompensationTable,
    trials: usize,
    rng: &mut R,
) -> CoverageReport {
    let mut report = CoverageReport {
        trials: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
        first_violation: None,
    };
    if model.segments.is_empty() || model.keypoints.is_empty() {
        return report;
    }
    for _ in 0..trials {
        let segment = &model.segments[rng.random_range(0..model.segments.len())];
        let p = sample_inside(&segment.shape, rng);
        let name = assign_nearest(&p, &model.keypoints).expect("non-empty keypoints");
        let d = (p - model.keypoints[name]).norm();
        let allowed = table.get(name).and_then(|c| c.to_f64()).unwrap_or(0.0) + table.slack();
        let excess = d - allowed;
        report.trials += 1;
        report.worst_excess = report.worst_excess.max(excess);
        if excess > 0.0 {
            report.violations += 1;
            if report.first_violation.is_none() {
                report.first_violation = Some((p, name.to_string()));
            }
        }
    }
    report
}
