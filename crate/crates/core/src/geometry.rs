//! Points, rigid/affine transforms, keypoint frames and distance matrices.
//!
//! Everything here is in meters and lives in the robot base frame unless a
//! caller says otherwise. Transforms are plain values; fitting a transform
//! from calibration correspondences is done by [`fit_transform`].

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, SVD};
use thiserror::Error;

pub use nalgebra::{Point3, Vector3};

/// Determinant magnitude below which a linear map is treated as singular.
const SINGULAR_DET: f64 = 1e-12;
/// Orthonormality tolerance for transforms flagged rigid.
const RIGID_TOL: f64 = 1e-9;
/// Relative singular-value cutoff used for the calibration rank checks.
const RANK_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("linear part is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("linear part is not a rotation (orthonormality error {0:e})")]
    NotRigid(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate correspondences: {0}")]
    DegenerateCorrespondences(String),
}

/// A 3D affine map `p -> linear * p + translation`.
///
/// Transforms built through [`AffineTransform::rigid`] (or composed only from
/// rigid parts) carry a rigid flag; their linear part is a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    linear: Matrix3<f64>,
    translation: Vector3<f64>,
    rigid: bool,
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            linear: Matrix3::identity(),
            translation: Vector3::zeros(),
            rigid: true,
        }
    }

    /// General affine transform. Fails when the linear part is singular.
    pub fn new(linear: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        check_finite(&linear, &translation)?;
        let det = linear.determinant();
        if det.abs() <= SINGULAR_DET {
            return Err(GeometryError::Singular(det));
        }
        Ok(Self {
            linear,
            translation,
            rigid: false,
        })
    }

    /// Rigid transform. The linear part must be orthonormal with determinant +1.
    pub fn rigid(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        check_finite(&rotation, &translation)?;
        let err = orthonormality_error(&rotation);
        if err > RIGID_TOL || rotation.determinant() < 0.0 {
            return Err(GeometryError::NotRigid(err));
        }
        Ok(Self {
            linear: rotation,
            translation,
            rigid: true,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            linear: Matrix3::identity(),
            translation,
            rigid: true,
        }
    }

    /// Rotation by `angle` radians about `axis` (normalized here).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            linear: *rot.matrix(),
            translation: Vector3::zeros(),
            rigid: true,
        }
    }

    /// Rotation given as a rotation vector (axis scaled by angle in radians).
    pub fn from_rotation_vector(rotvec: &Vector3<f64>, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::new(*rotvec);
        Self {
            linear: *rot.matrix(),
            translation,
            rigid: true,
        }
    }

    pub fn linear(&self) -> &Matrix3<f64> {
        &self.linear
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn is_rigid(&self) -> bool {
        self.rigid
    }

    #[inline]
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.linear * p.coords + self.translation)
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.linear * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        AffineTransform {
            linear: self.linear * other.linear,
            translation: self.linear * other.translation + self.translation,
            rigid: self.rigid && other.rigid,
        }
    }

    pub fn inverse(&self) -> AffineTransform {
        let inv = if self.rigid {
            self.linear.transpose()
        } else {
            // non-singular by construction
            self.linear.try_inverse().expect("validated non-singular")
        };
        AffineTransform {
            linear: inv,
            translation: -(inv * self.translation),
            rigid: self.rigid,
        }
    }

    /// Max deviation of `linearᵀ·linear` from identity.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.linear)
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Free-function form of [`AffineTransform::apply`].
pub fn apply_transform(t: &AffineTransform, p: &Point3<f64>) -> Point3<f64> {
    t.apply(p)
}

fn check_finite(linear: &Matrix3<f64>, translation: &Vector3<f64>) -> Result<(), GeometryError> {
    if !linear.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("linear part"));
    }
    if !translation.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("translation"));
    }
    Ok(())
}

fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Rigid,
    Affine,
}

/// Least-squares transform mapping each source point onto its target.
///
/// Rigid mode is the SVD (orthogonal Procrustes) closed form with a
/// reflection guard; affine mode solves the 4×4 normal equations.
pub fn fit_transform(
    correspondences: &[(Point3<f64>, Point3<f64>)],
    mode: FitMode,
) -> Result<AffineTransform, GeometryError> {
    let (min_points, min_rank) = match mode {
        FitMode::Rigid => (3, 2),
        FitMode::Affine => (4, 3),
    };
    if correspondences.len() < min_points {
        return Err(GeometryError::DegenerateCorrespondences(format!(
            "{:?} fit needs at least {min_points} correspondences, got {}",
            mode,
            correspondences.len()
        )));
    }
    for (s, t) in correspondences {
        if !s.iter().chain(t.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("correspondence"));
        }
    }

    let n = correspondences.len() as f64;
    let src_mean = correspondences
        .iter()
        .fold(Vector3::zeros(), |acc, (s, _)| acc + s.coords)
        / n;
    let dst_mean = correspondences
        .iter()
        .fold(Vector3::zeros(), |acc, (_, t)| acc + t.coords)
        / n;

    // Rank of the centered source cloud decides collinear / coplanar.
    let scatter = correspondences.iter().fold(Matrix3::zeros(), |acc, (s, _)| {
        let d = s.coords - src_mean;
        acc + d * d.transpose()
    });
    // Eigenvalues of the scatter matrix are squared singular values.
    let mut spread: Vec<f64> = scatter
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    spread.sort_by(|a, b| b.total_cmp(a));
    let rank = spread.iter().filter(|&&v| v > RANK_TOL * spread[0]).count();
    if spread[0] <= 0.0 || rank < min_rank {
        let what = if min_rank == 2 { "collinear" } else { "coplanar" };
        return Err(GeometryError::DegenerateCorrespondences(format!(
            "source points are {what} (rank {rank})"
        )));
    }

    match mode {
        FitMode::Rigid => {
            let cross = correspondences.iter().fold(Matrix3::zeros(), |acc, (s, t)| {
                acc + (s.coords - src_mean) * (t.coords - dst_mean).transpose()
            });
            let svd = SVD::new(cross, true, true);
            let u = svd.u.expect("u requested");
            let v_t = svd.v_t.expect("v_t requested");
            let v = v_t.transpose();
            let d = (v * u.transpose()).determinant().signum();
            let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
            let translation = dst_mean - rotation * src_mean;
            AffineTransform::rigid(rotation, translation)
        }
        FitMode::Affine => {
            // Normal equations on homogeneous source coordinates.
            let mut xtx = Matrix4::<f64>::zeros();
            let mut xty = nalgebra::Matrix4x3::<f64>::zeros();
            for (s, t) in correspondences {
                let x = nalgebra::Vector4::new(s.x, s.y, s.z, 1.0);
                xtx += x * x.transpose();
                xty += x * t.coords.transpose();
            }
            let beta = xtx
                .lu()
                .solve(&xty)
                .ok_or_else(|| GeometryError::DegenerateCorrespondences("normal equations are singular".into()))?;
            // beta rows 0..3 are linearᵀ, row 3 is translation.
            let linear = beta.fixed_view::<3, 3>(0, 0).transpose();
            let translation = beta.fixed_view::<1, 3>(3, 0).transpose();
            AffineTransform::new(linear, translation)
        }
    }
}

/// Max and RMS point residual of `t` over the correspondences.
pub fn fit_residuals(t: &AffineTransform, correspondences: &[(Point3<f64>, Point3<f64>)]) -> (f64, f64) {
    if correspondences.is_empty() {
        return (0.0, 0.0);
    }
    let mut max = 0.0f64;
    let mut sum_sq = 0.0;
    for (s, target) in correspondences {
        let r = (t.apply(s) - target).norm();
        max = max.max(r);
        sum_sq += r * r;
    }
    (max, (sum_sq / correspondences.len() as f64).sqrt())
}

/// One named keypoint observation. `position == None` marks a dropped
/// detection; it is never encoded as a sentinel coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub name: String,
    pub position: Option<Point3<f64>>,
    pub confidence: f64,
}

impl Keypoint {
    pub fn present(name: impl Into<String>, position: Point3<f64>) -> Self {
        Self {
            name: name.into(),
            position: Some(position),
            confidence: 1.0,
        }
    }

    pub fn missing(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            position: None,
            confidence: 0.0,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }
}

/// Timestamped set of keypoints for one agent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeypointFrame {
    pub timestamp: f64,
    pub keypoints: Vec<Keypoint>,
}

impl KeypointFrame {
    pub fn new(timestamp: f64) -> Self {
        Self {
            timestamp,
            keypoints: Vec::new(),
        }
    }

    pub fn with(mut self, keypoint: Keypoint) -> Self {
        self.keypoints.push(keypoint);
        self
    }

    pub fn push(&mut self, keypoint: Keypoint) {
        self.keypoints.push(keypoint);
    }

    pub fn get(&self, name: &str) -> Option<&Keypoint> {
        self.keypoints.iter().find(|k| k.name == name)
    }

    pub fn position(&self, name: &str) -> Option<Point3<f64>> {
        self.get(name).and_then(|k| k.position)
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    /// Same frame with every present keypoint mapped through `t`.
    pub fn transformed(&self, t: &AffineTransform) -> KeypointFrame {
        KeypointFrame {
            timestamp: self.timestamp,
            keypoints: self
                .keypoints
                .iter()
                .map(|k| Keypoint {
                    name: k.name.clone(),
                    position: k.position.map(|p| t.apply(&p)),
                    confidence: k.confidence,
                })
                .collect(),
        }
    }
}

/// Row-major matrix of keypoint distances. `None` marks a pair where at
/// least one side was missing.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: Vec<String>,
    cols: Vec<String>,
    data: Vec<Option<f64>>,
}

impl DistanceMatrix {
    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn cols(&self) -> &[String] {
        &self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.data[i * self.cols.len() + j]
    }

    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.rows.iter().position(|r| r == row)?;
        let j = self.cols.iter().position(|c| c == col)?;
        self.at(i, j)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }
}

pub fn pairwise_distances(a: &KeypointFrame, b: &KeypointFrame) -> DistanceMatrix {
    let mut data = Vec::with_capacity(a.len() * b.len());
    for ka in &a.keypoints {
        for kb in &b.keypoints {
            data.push(match (ka.position, kb.position) {
                (Some(p), Some(q)) => Some((p - q).norm()),
                _ => None,
            });
        }
    }
    DistanceMatrix {
        rows: a.keypoints.iter().map(|k| k.name.clone()).collect(),
        cols: b.keypoints.iter().map(|k| k.name.clone()).collect(),
        data,
    }
}
