//! Camera intrinsics, rigid poses and the projection/unprojection pair.
//!
//! Two intrinsic models are supported: a plain pinhole and a radial fisheye
//! (equidistant angle mapping with two radial coefficients, the
//! `RADIAL_FISHEYE` layout used by common SfM tools):
//!
//! ```text
//! r   = |(x/z, y/z)|
//! θ   = atan(r)
//! θ_d = θ (1 + k1 θ² + k2 θ⁴)
//! u   = f (θ_d / r) x/z + cx
//! ```
//!
//! Poses map camera-frame points into the world frame.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::{Matrix3, Matrix4, Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// World coordinates in meters.
pub type WorldPoint = Point3<f64>;

/// Tolerance for `‖RᵀR − I‖∞` and `|det R − 1|` when validating rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Convergence tolerance on θ for the fisheye inversion.
pub const UNDISTORT_TOLERANCE: f64 = 1e-10;

/// Iteration cap for the fisheye inversion.
pub const UNDISTORT_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point has non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("fisheye inversion did not converge after {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("ray at θ = {0} rad lies outside the field of view")]
    OutsideFieldOfView(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("non-finite pixel ({0}, {1})")]
    NonFinitePixel(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraModel {
    Pinhole,
    RadialFisheye,
}

impl fmt::Display for CameraModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CameraModel::Pinhole => f.write_str("pinhole"),
            CameraModel::RadialFisheye => f.write_str("radial_fisheye"),
        }
    }
}

/// Intrinsic calibration of a camera.
///
/// `width`/`height` are the image size in pixels; they are not used by the
/// projection math but bound the valid pixel range (depth lookups, visibility).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub model: CameraModel,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn pinhole(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, CameraError> {
        Self {
            model: CameraModel::Pinhole,
            fx,
            fy,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
            width,
            height,
        }
        .validated()
    }

    /// Fisheye model with a single focal length.
    pub fn radial_fisheye(
        f: f64,
        cx: f64,
        cy: f64,
        k1: f64,
        k2: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, CameraError> {
        Self {
            model: CameraModel::RadialFisheye,
            fx: f,
            fy: f,
            cx,
            cy,
            k1,
            k2,
            width,
            height,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, CameraError> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(CameraError::InvalidIntrinsics(
                "non-finite parameter".into(),
            ));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CameraError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        match self.model {
            CameraModel::Pinhole => {
                if self.k1 != 0.0 || self.k2 != 0.0 {
                    return Err(CameraError::InvalidIntrinsics(
                        "pinhole model carries no distortion (k1 = k2 = 0)".into(),
                    ));
                }
            }
            CameraModel::RadialFisheye => {
                if self.fx != self.fy {
                    return Err(CameraError::InvalidIntrinsics(format!(
                        "radial fisheye uses a single focal length (fx={} != fy={})",
                        self.fx, self.fy
                    )));
                }
            }
        }
        Ok(())
    }

    /// Radial distortion factor `1 + k1 θ² + k2 θ⁴`.
    fn radial_factor(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        1.0 + self.k1 * t2 + self.k2 * t2 * t2
    }

    /// Whether a pixel lies inside `[0, width) × [0, height)`.
    pub fn contains(&self, px: &PixelPoint) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.width as f64 && px.v < self.height as f64
    }
}

/// Pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Projects a camera-frame point to pixels.
pub fn project(
    point_cam: &Vector3<f64>,
    intr: &CameraIntrinsics,
) -> Result<PixelPoint, CameraError> {
    if !(point_cam.z > 0.0) {
        return Err(CameraError::NonPositiveDepth(point_cam.z));
    }
    let a = point_cam.x / point_cam.z;
    let b = point_cam.y / point_cam.z;
    let (mx, my) = match intr.model {
        CameraModel::Pinhole => (a, b),
        CameraModel::RadialFisheye => {
            let r = a.hypot(b);
            if r == 0.0 {
                (0.0, 0.0)
            } else {
                let theta = r.atan();
                if theta >= FRAC_PI_2 {
                    return Err(CameraError::OutsideFieldOfView(theta));
                }
                let scale = theta * intr.radial_factor(theta) / r;
                (scale * a, scale * b)
            }
        }
    };
    Ok(PixelPoint {
        u: intr.fx * mx + intr.cx,
        v: intr.fy * my + intr.cy,
    })
}

/// Inverts the intrinsic model: returns normalized coordinates `(x/z, y/z)`.
///
/// The fisheye branch solves `θ_d = θ (1 + k1 θ² + k2 θ⁴)` by fixed-point
/// iteration `θ ← θ_d / (1 + k1 θ² + k2 θ⁴)`.
pub fn undistort_to_ray(
    px: &PixelPoint,
    intr: &CameraIntrinsics,
) -> Result<Vector2<f64>, CameraError> {
    if !px.u.is_finite() || !px.v.is_finite() {
        return Err(CameraError::NonFinitePixel(px.u, px.v));
    }
    let mx = (px.u - intr.cx) / intr.fx;
    let my = (px.v - intr.cy) / intr.fy;
    match intr.model {
        CameraModel::Pinhole => Ok(Vector2::new(mx, my)),
        CameraModel::RadialFisheye => {
            let theta_d = mx.hypot(my);
            if theta_d == 0.0 {
                return Ok(Vector2::zeros());
            }
            let theta = solve_theta(theta_d, intr)?;
            if !(0.0..FRAC_PI_2).contains(&theta) {
                return Err(CameraError::OutsideFieldOfView(theta));
            }
            let scale = theta.tan() / theta_d;
            Ok(Vector2::new(scale * mx, scale * my))
        }
    }
}

fn solve_theta(theta_d: f64, intr: &CameraIntrinsics) -> Result<f64, CameraError> {
    let mut theta = theta_d;
    let mut step = f64::INFINITY;
    for _ in 0..UNDISTORT_MAX_ITERATIONS {
        let next = theta_d / intr.radial_factor(theta);
        if !next.is_finite() {
            break;
        }
        step = (next - theta).abs();
        theta = next;
        if step <= UNDISTORT_TOLERANCE {
            return Ok(theta);
        }
    }
    Err(CameraError::NoConvergence {
        iterations: UNDISTORT_MAX_ITERATIONS,
        last_step: step,
    })
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CameraError> {
        if rotation
            .iter()
            .chain(translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(CameraError::InvalidPose("non-finite entry".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho >= ROTATION_TOLERANCE {
            return Err(CameraError::InvalidPose(format!(
                "rotation is not orthonormal (‖RᵀR − I‖∞ = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() >= ROTATION_TOLERANCE {
            return Err(CameraError::InvalidPose(format!(
                "rotation determinant {det} != +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Parses a row-major 4×4 homogeneous matrix.
    pub fn from_row_major(m: &[f64; 16]) -> Result<Self, CameraError> {
        let bottom = [m[12], m[13], m[14], m[15]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(CameraError::InvalidPose(format!(
                "last row must be [0, 0, 0, 1], got {bottom:?}"
            )));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        Self::new(rotation, translation)
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        Matrix4::from_row_slice(&self.to_row_major())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> WorldPoint {
        Point3::from(self.translation)
    }

    pub fn cam_to_world(&self, p_cam: &Vector3<f64>) -> WorldPoint {
        Point3::from(self.rotation * p_cam + self.translation)
    }

    /// `Rᵀ (p − t)`.
    pub fn world_to_cam(&self, wp: &WorldPoint) -> Vector3<f64> {
        self.rotation.transpose() * (wp.coords - self.translation)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Largest deviation of the rotation from orthonormality.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

pub fn invert_pose(pose: &Pose) -> Pose {
    pose.inverse()
}

/// Expresses a world point in the camera frame of `pose`.
///
/// With `pose` the query-frame pose this is the relative displacement vector.
pub fn world_to_cam(wp: &WorldPoint, pose: &Pose) -> Vector3<f64> {
    pose.world_to_cam(wp)
}

/// Back-projects a pixel at metric depth `depth` (along the optical axis) into the world.
pub fn unproject(
    px: &PixelPoint,
    depth: f64,
    intr: &CameraIntrinsics,
    pose: &Pose,
) -> Result<WorldPoint, CameraError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(CameraError::NonPositiveDepth(depth));
    }
    let ray = undistort_to_ray(px, intr)?;
    let p_cam = Vector3::new(ray.x, ray.y, 1.0) * depth;
    Ok(pose.cam_to_world(&p_cam))
}

/// Unit viewing direction of a pixel in the world frame.
pub fn pixel_direction(
    px: &PixelPoint,
    intr: &CameraIntrinsics,
    pose: &Pose,
) -> Result<Vector3<f64>, CameraError> {
    let ray = undistort_to_ray(px, intr)?;
    Ok((pose.rotation() * Vector3::new(ray.x, ray.y, 1.0)).normalize())
}

/// Rotation about a unit axis (Rodrigues).
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let unit = nalgebra::Unit::new_normalize(*axis);
    *nalgebra::Rotation3::from_axis_angle(&unit, angle).matrix()
}
