//! Pinhole projection of target feature points, visibility, and the
//! estimation-error channel.

use nalgebra::{DMatrix, DVector, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::VisionError;
use crate::geometry::{compose, inverse, vec_of, Pose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    /// Focal length.
    pub lambda: f64,
    /// Image bounds `(u_max, v_max)`; a projection is in view when `|u| <= u_max`
    /// and `|v| <= v_max`.
    pub image_half_extent: [f64; 2],
    /// Minimum admissible depth in meters.
    pub z_min: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            image_half_extent: [1.0, 1.0],
            z_min: 0.05,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), VisionError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.lambda) {
            return Err(VisionError::InvalidCamera(format!("lambda = {}", self.lambda)));
        }
        if !ok(self.z_min) {
            return Err(VisionError::InvalidCamera(format!("z_min = {}", self.z_min)));
        }
        if !self.image_half_extent.iter().all(|&b| ok(b)) {
            return Err(VisionError::InvalidCamera(format!(
                "image_half_extent = {:?}",
                self.image_half_extent
            )));
        }
        Ok(())
    }

    fn in_bounds(&self, f: &Vector2<f64>) -> bool {
        f.x.abs() <= self.image_half_extent[0] && f.y.abs() <= self.image_half_extent[1]
    }
}

/// Target feature points expressed in the target frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct FeatureSet {
    points: Vec<Vector3<f64>>,
}

impl FeatureSet {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, VisionError> {
        if points.len() < 4 {
            return Err(VisionError::InvalidFeatures(format!(
                "need at least 4 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(VisionError::InvalidFeatures("non-finite coordinate".into()));
        }
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                for c in b + 1..points.len() {
                    let area = (points[b] - points[a]).cross(&(points[c] - points[a])).norm();
                    if area < 1e-12 {
                        return Err(VisionError::InvalidFeatures(format!(
                            "points {a}, {b}, {c} are collinear"
                        )));
                    }
                }
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for FeatureSet {
    /// Four points on a 0.2 m square centered on the target origin.
    fn default() -> Self {
        let h = 0.1;
        Self {
            points: vec![
                Vector3::new(h, h, 0.0),
                Vector3::new(-h, h, 0.0),
                Vector3::new(-h, -h, 0.0),
                Vector3::new(h, -h, 0.0),
            ],
        }
    }
}

impl TryFrom<Vec<[f64; 3]>> for FeatureSet {
    type Error = VisionError;

    fn try_from(v: Vec<[f64; 3]>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(Vector3::from).collect())
    }
}

impl From<FeatureSet> for Vec<[f64; 3]> {
    fn from(f: FeatureSet) -> Self {
        f.points.iter().map(|p| [p.x, p.y, p.z]).collect()
    }
}

/// `(lambda / z) [x, y]`.
pub fn project(p_cam: &Vector3<f64>, cam: &CameraModel) -> Result<Vector2<f64>, VisionError> {
    if p_cam.z.is_nan() || p_cam.z < cam.z_min {
        return Err(VisionError::DepthTooSmall {
            z: p_cam.z,
            z_min: cam.z_min,
        });
    }
    Ok(Vector2::new(p_cam.x, p_cam.y) * (cam.lambda / p_cam.z))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VisibilityFailure {
    /// Point `point` is at or behind the minimum depth.
    TooClose { point: usize, depth: f64 },
    /// Point `point` projects outside the image bounds.
    OutOfFrame { point: usize, u: f64, v: f64 },
}

impl VisibilityFailure {
    pub fn point(&self) -> usize {
        match *self {
            Self::TooClose { point, .. } | Self::OutOfFrame { point, .. } => point,
        }
    }
}

/// Projections of every feature, stacked as `[u_1, v_1, ..., u_m, v_m]`.
/// Fails on the first feature that is too close or out of frame.
pub fn feature_vector(
    g_i0: &Pose,
    features: &FeatureSet,
    cam: &CameraModel,
) -> Result<DVector<f64>, VisibilityFailure> {
    let mut f = DVector::zeros(2 * features.len());
    for (j, p) in features.points().iter().enumerate() {
        let pc = g_i0.transform_point(p);
        let uv = project(&pc, cam).map_err(|_| VisibilityFailure::TooClose { point: j, depth: pc.z })?;
        if !cam.in_bounds(&uv) {
            return Err(VisibilityFailure::OutOfFrame {
                point: j,
                u: uv.x,
                v: uv.y,
            });
        }
        f[2 * j] = uv.x;
        f[2 * j + 1] = uv.y;
    }
    Ok(f)
}

/// Projections of every feature ignoring image bounds; `None` for points
/// closer than `z_min`. Used for trace dumps.
pub fn raw_projections(g_i0: &Pose, features: &FeatureSet, cam: &CameraModel) -> Vec<Option<Vector2<f64>>> {
    features
        .points()
        .iter()
        .map(|p| project(&g_i0.transform_point(p), cam).ok())
        .collect()
}

/// `vec(g_bar^{-1} g)`.
pub fn estimation_error(g_bar_i0: &Pose, g_i0: &Pose) -> Vector4<f64> {
    vec_of(&compose(&inverse(g_bar_i0), g_i0))
}

pub fn feature_residual(f: &DVector<f64>, f_bar: &DVector<f64>) -> Result<DVector<f64>, VisionError> {
    if f.len() != f_bar.len() {
        return Err(VisionError::LengthMismatch(f.len(), f_bar.len()));
    }
    Ok(f - f_bar)
}

/// Numerical image Jacobian of the feature vector with respect to the
/// estimation-error coordinates `[p_e, theta_e]`, evaluated at
/// `g_i0 = g_bar_i0 * g_e`. Returns `None` if any perturbed pose loses sight
/// of a feature.
pub fn image_jacobian(g_bar_i0: &Pose, g_e: &Pose, features: &FeatureSet, cam: &CameraModel) -> Option<DMatrix<f64>> {
    const H: f64 = 1e-6;
    let m2 = 2 * features.len();
    let mut j = DMatrix::zeros(m2, 4);
    let base = g_e.flatten();
    for k in 0..4 {
        let mut plus = base;
        let mut minus = base;
        plus[k] += H;
        minus[k] -= H;
        let fp = feature_vector(&compose(g_bar_i0, &Pose::from_flat(&plus)), features, cam).ok()?;
        let fm = feature_vector(&compose(g_bar_i0, &Pose::from_flat(&minus)), features, cam).ok()?;
        j.set_column(k, &((fp - fm) / (2.0 * H)));
    }
    Some(j)
}

/// Least-squares pose perturbation equivalent to a feature-space residual:
/// `J^+ residual`, with `J` from [`image_jacobian`].
pub fn pose_perturbation(
    g_bar_i0: &Pose,
    g_e: &Pose,
    features: &FeatureSet,
    cam: &CameraModel,
    residual: &DVector<f64>,
) -> Option<Vector4<f64>> {
    let j = image_jacobian(g_bar_i0, g_e, features, cam)?;
    let pinv = j.pseudo_inverse(1e-12).ok()?;
    let d = pinv * residual;
    Some(Vector4::new(d[0], d[1], d[2], d[3]))
}
