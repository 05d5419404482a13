//! Similarity-transform registration between a local reconstruction frame
//! and an annotated world frame.
//!
//! The closed-form fit is Umeyama's least-squares similarity: centroid
//! subtraction, SVD of the cross-covariance with a determinant sign
//! correction, and scale from the source variance.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{Pose, WorldPoint, ROTATION_TOLERANCE};

/// Default robust inlier threshold, meters.
pub const DEFAULT_MAX_ERROR: f64 = 0.25;
pub const DEFAULT_RANSAC_ITERATIONS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("need at least 3 correspondences with equal lengths (src {src}, dst {dst})")]
    BadInput { src: usize, dst: usize },
    #[error("source points are collinear or coincident")]
    Degenerate,
    #[error("best consensus has {0} inliers, need at least 3")]
    InsufficientInliers(usize),
    #[error("invalid Sim3: {0}")]
    InvalidSim3(String),
}

/// `x ↦ s R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3 {
    scale: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Sim3 {
    pub fn new(
        scale: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, AlignError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(AlignError::InvalidSim3(format!(
                "scale must be positive, got {scale}"
            )));
        }
        // Reuse the rigid-pose validation for the rotation part.
        Pose::new(rotation, translation).map_err(|e| AlignError::InvalidSim3(e.to_string()))?;
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &WorldPoint) -> WorldPoint {
        WorldPoint::from(self.rotation * p.coords * self.scale + self.translation)
    }

    pub fn inverse(&self) -> Sim3 {
        let rt = self.rotation.transpose();
        Sim3 {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Sim3) -> Sim3 {
        Sim3 {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    /// Residuals `‖dst_i − T(src_i)‖`.
    pub fn residuals(&self, src: &[WorldPoint], dst: &[WorldPoint]) -> Vec<f64> {
        src.iter()
            .zip(dst)
            .map(|(s, d)| (d - self.apply(s)).norm())
            .collect()
    }
}

/// JSON layout of `sim3.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sim3Record {
    pub scale: f64,
    /// Row-major 3×3.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&Sim3> for Sim3Record {
    fn from(t: &Sim3) -> Self {
        let r = &t.rotation;
        Self {
            scale: t.scale,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: t.translation.into(),
        }
    }
}

impl TryFrom<&Sim3Record> for Sim3 {
    type Error = AlignError;
    fn try_from(r: &Sim3Record) -> Result<Self, Self::Error> {
        Sim3::new(
            r.scale,
            Matrix3::from_row_slice(&r.rotation),
            Vector3::from(r.translation),
        )
    }
}

fn centroid(points: &[WorldPoint]) -> Vector3<f64> {
    points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords)
        / points.len() as f64
}

/// Least-squares similarity minimizing `Σ ‖dst_i − (s R src_i + t)‖²`.
pub fn estimate_sim3(src: &[WorldPoint], dst: &[WorldPoint]) -> Result<Sim3, AlignError> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(AlignError::BadInput {
            src: src.len(),
            dst: dst.len(),
        });
    }
    let n = src.len() as f64;
    let mu_s = centroid(src);
    let mu_d = centroid(dst);

    let mut cov = Matrix3::zeros();
    let mut src_scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let cs = s.coords - mu_s;
        let cd = d.coords - mu_d;
        cov += cd * cs.transpose();
        src_scatter += cs * cs.transpose();
        var_s += cs.norm_squared();
    }
    cov /= n;
    var_s /= n;

    // Rank of the source spread: collinear or coincident sets leave the rotation unconstrained.
    let spread = src_scatter.symmetric_eigenvalues();
    let mut sorted = [spread[0], spread[1], spread[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[0] > 0.0) || sorted[1] <= 1e-12 * sorted[0] {
        return Err(AlignError::Degenerate);
    }

    let svd = cov.svd(true, true);
    let u = svd.u.ok_or(AlignError::Degenerate)?;
    let v_t = svd.v_t.ok_or(AlignError::Degenerate)?;
    // Reflection correction flips the axis of the smallest singular value.
    let mut correction = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        correction[(smallest, smallest)] = -1.0;
    }
    let rotation = u * correction * v_t;
    let trace: f64 = (0..3)
        .map(|i| svd.singular_values[i] * correction[(i, i)])
        .sum();
    let scale = trace / var_s;
    if !(scale > 0.0) {
        return Err(AlignError::Degenerate);
    }
    let translation = mu_d - rotation * mu_s * scale;
    debug_assert!((rotation.determinant() - 1.0).abs() < ROTATION_TOLERANCE);
    Ok(Sim3 {
        scale,
        rotation,
        translation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustSim3 {
    pub transform: Sim3,
    pub inlier_mask: Vec<bool>,
}

impl RobustSim3 {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&m| m).count()
    }
}

fn select<T: Copy>(items: &[T], mask: &[bool]) -> Vec<T> {
    items
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .collect()
}

/// RANSAC over 3-point samples followed by a refit on the best consensus set.
///
/// Deterministic for a given seed.
pub fn estimate_sim3_robust(
    src: &[WorldPoint],
    dst: &[WorldPoint],
    max_error: f64,
    iterations: usize,
    seed: u64,
) -> Result<RobustSim3, AlignError> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(AlignError::BadInput {
            src: src.len(),
            dst: dst.len(),
        });
    }
    let n = src.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    for _ in 0..iterations.max(1) {
        let sample = index::sample(&mut rng, n, 3).into_vec();
        let s: Vec<_> = sample.iter().map(|&i| src[i]).collect();
        let d: Vec<_> = sample.iter().map(|&i| dst[i]).collect();
        let Ok(model) = estimate_sim3(&s, &d) else {
            continue;
        };
        let residuals = model.residuals(src, dst);
        let mask: Vec<bool> = residuals.iter().map(|&r| r <= max_error).collect();
        let count = mask.iter().filter(|&&m| m).count();
        let cost: f64 = residuals
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(r, _)| r * r)
            .sum();
        let better = match &best {
            None => true,
            Some((c, e, _)) => count > *c || (count == *c && cost < *e),
        };
        if better {
            best = Some((count, cost, mask));
        }
    }
    let (count, _, mask) = best.unwrap_or((0, 0.0, vec![false; n]));
    if count < 3 {
        return Err(AlignError::InsufficientInliers(count));
    }
    let transform = estimate_sim3(&select(src, &mask), &select(dst, &mask))?;
    Ok(RobustSim3 {
        transform,
        inlier_mask: mask,
    })
}

/// Geodesic angle between two rotations, accurate near zero.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let chord = (a - b).norm() / (2.0 * std::f64::consts::SQRT_2);
    2.0 * chord.min(1.0).asin()
}

/// Moves a camera-to-world pose into the target frame: `R' = R_t R`, `t' = s R_t t + t_t`.
pub fn apply_sim3_pose(t: &Sim3, pose: &Pose) -> Pose {
    let rotation = t.rotation * pose.rotation();
    let translation = t.rotation * pose.translation() * t.scale + t.translation;
    Pose::new(rotation, translation).expect("product of rotations stays orthonormal")
}
