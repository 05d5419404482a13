//! Synthetic egocentric scenes with ground truth, used as the end-to-end
//! oracle for the localization pipeline and its noise ablations.
//!
//! World frame is z-up. Cameras follow the usual optical convention
//! (x right, y down, z forward). Every random draw comes from a ChaCha8
//! stream derived from the caller's seed, so outputs are pure functions of
//! `(config, seed)`.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{self, CameraIntrinsics, PixelPoint, Pose, WorldPoint};
use crate::localize::{FramePoses, ScalarDepths};
use crate::metrics::GroundTruth;
use crate::signal::{BBox, Detection, DetectionTimeline};

/// Per-frame motion bounds of generated trajectories.
pub const MAX_FRAME_ROTATION: f64 = 10.0 * std::f64::consts::PI / 180.0;
pub const MAX_FRAME_TRANSLATION: f64 = 0.1;

/// Queries are only drawn where the object scored at least this much before the query frame.
pub const MIN_QUERY_PEAK_SCORE: f64 = 0.5;

/// Upper bound of the distractor score floor.
pub const DISTRACTOR_SCORE_MAX: f64 = 0.1;

/// Lower clamp for noisy depths, meters.
pub const MIN_DEPTH: f64 = 0.01;

const CAMERA_HEIGHT: f64 = 1.5;
const WALL_MARGIN: f64 = 0.5;
const OBJECT_SIZE: f64 = 0.3;
const PLACEMENT_RETRIES: usize = 50;
const QUERY_RETRIES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid noise configuration: {0}")]
    InvalidNoise(String),
    #[error("could not make every object visible after {0} attempts")]
    InfeasiblePlacement(usize),
    #[error("object '{object}' is never visible before frame {query_frame}")]
    NeverVisible { object: String, query_frame: usize },
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("frame {frame} is outside the trajectory of {len} frames")]
    FrameOutOfRange { frame: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_objects: usize,
    pub n_frames: usize,
    /// Side of the square room, meters.
    pub room_extent: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_objects: 8,
            n_frames: 300,
            room_extent: 8.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_frames < 2 {
            return Err(SimError::InvalidConfig(format!(
                "n_frames must be at least 2, got {}",
                self.n_frames
            )));
        }
        if !(self.room_extent > 2.0 * WALL_MARGIN + 0.5 && self.room_extent.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "room_extent {} is too small",
                self.room_extent
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Depth scale `k ~ N(1, σ)`, drawn per frame.
    pub depth_scale_sigma: f64,
    /// Depth shift `b ~ N(0, σ)` meters, drawn per frame.
    pub depth_shift_sigma: f64,
    /// Replaces every depth with a uniform draw from this range.
    pub depth_random: Option<(f64, f64)>,
    pub pose_dropout: f64,
    pub score_noise_sigma: f64,
    pub pixel_noise_sigma: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let sigmas = [
            ("depth_scale_sigma", self.depth_scale_sigma),
            ("depth_shift_sigma", self.depth_shift_sigma),
            ("score_noise_sigma", self.score_noise_sigma),
            ("pixel_noise_sigma", self.pixel_noise_sigma),
        ];
        for (name, s) in sigmas {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SimError::InvalidNoise(format!(
                    "{name} must be finite and non-negative, got {s}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.pose_dropout) {
            return Err(SimError::InvalidNoise(format!(
                "pose_dropout must lie in [0, 1], got {}",
                self.pose_dropout
            )));
        }
        if let Some((lo, hi)) = self.depth_random {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(SimError::InvalidNoise(format!(
                    "depth_random range ({lo}, {hi}) is invalid"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub objects: BTreeMap<String, WorldPoint>,
    pub trajectory: Vec<Pose>,
    pub intr: CameraIntrinsics,
    pub seed: u64,
}

/// Everything the pipeline consumes for one query, plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedQuery {
    pub timeline: DetectionTimeline,
    pub poses: FramePoses,
    pub depths: ScalarDepths,
    pub gt: GroundTruth,
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Camera used for every synthetic scene: a mildly distorted 640×480 fisheye.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::radial_fisheye(280.0, 320.0, 240.0, 0.02, 0.005, 640, 480)
        .expect("built-in intrinsics are valid")
}

/// Camera-to-world rotation for a camera looking along `yaw` with `pitch` (positive up).
fn look_rotation(yaw: f64, pitch: f64) -> Matrix3<f64> {
    let forward = Vector3::new(
        yaw.cos() * pitch.cos(),
        yaw.sin() * pitch.cos(),
        pitch.sin(),
    );
    let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
    let down = forward.cross(&right);
    Matrix3::from_columns(&[right, down, forward])
}

fn random_trajectory(rng: &mut ChaCha8Rng, config: &SceneConfig) -> Vec<Pose> {
    let half = 0.5 * config.room_extent - WALL_MARGIN;
    let mut pos = Vector3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        CAMERA_HEIGHT,
    );
    let mut yaw = rng.random_range(0.0..std::f64::consts::TAU);
    let direction = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut yaw_rate: f64 = rng.random_range(5.0f64..8.0).to_radians();
    let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
    let mut speed: f64 = rng.random_range(0.02..0.08);
    let pitch_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut poses = Vec::with_capacity(config.n_frames);
    for i in 0..config.n_frames {
        let pitch =
            (-15.0f64).to_radians() + 5.0f64.to_radians() * (0.05 * i as f64 + pitch_phase).sin();
        poses
            .push(Pose::new(look_rotation(yaw, pitch), pos).expect("look_rotation is orthonormal"));

        yaw_rate = (yaw_rate + rng.random_range(-0.5f64..0.5).to_radians())
            .clamp(4.0f64.to_radians(), 9.0f64.to_radians());
        yaw += direction * yaw_rate;
        heading += rng.random_range(-0.3..0.3);
        speed = (speed + rng.random_range(-0.01..0.01)).clamp(0.0, 0.08);
        let mut next = pos + Vector3::new(heading.cos(), heading.sin(), 0.0) * speed;
        for axis in 0..2 {
            if next[axis].abs() > half {
                next[axis] = pos[axis];
                heading = if axis == 0 {
                    std::f64::consts::PI - heading
                } else {
                    -heading
                };
            }
        }
        pos = next;
    }
    poses
}

/// Projection of `object` in a frame, with its camera-frame coordinates, when in view.
fn observe(
    object: &WorldPoint,
    pose: &Pose,
    intr: &CameraIntrinsics,
) -> Option<(PixelPoint, Vector3<f64>)> {
    let p_cam = pose.world_to_cam(object);
    let px = camera::project(&p_cam, intr).ok()?;
    intr.contains(&px).then_some((px, p_cam))
}

/// Noise-free detector response to a visible object.
pub fn visibility_score(p_cam: &Vector3<f64>) -> f64 {
    let d = p_cam.norm();
    let off_axis = (p_cam.z / d).clamp(-1.0, 1.0).acos();
    (-(off_axis / 0.5).powi(2)).exp() * (3.0 / d).clamp(0.0, 1.0)
}

/// Builds a scene: uniform object placement and a smooth sweeping walk that
/// sees every object at least once.
pub fn generate_scene(seed: u64, config: &SceneConfig) -> Result<SyntheticScene, SimError> {
    config.validate()?;
    let intr = default_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 * config.room_extent;
    for _ in 0..PLACEMENT_RETRIES {
        let objects: BTreeMap<String, WorldPoint> = (0..config.n_objects)
            .map(|i| {
                let p = WorldPoint::new(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(0.2..2.2),
                );
                (format!("obj{i:02}"), p)
            })
            .collect();
        let trajectory = random_trajectory(&mut rng, config);
        let all_visible = objects.values().all(|o| {
            trajectory
                .iter()
                .any(|pose| observe(o, pose, &intr).is_some())
        });
        if all_visible {
            return Ok(SyntheticScene {
                objects,
                trajectory,
                intr,
                seed,
            });
        }
    }
    Err(SimError::InfeasiblePlacement(PLACEMENT_RETRIES))
}

fn object_of<'a>(scene: &'a SyntheticScene, object_id: &str) -> Result<&'a WorldPoint, SimError> {
    scene
        .objects
        .get(object_id)
        .ok_or_else(|| SimError::UnknownObject(object_id.to_owned()))
}

/// Exact displacement of the object in the query camera frame.
pub fn oracle_displacement(
    scene: &SyntheticScene,
    object_id: &str,
    query_frame: usize,
) -> Result<Vector3<f64>, SimError> {
    let object = object_of(scene, object_id)?;
    let pose = scene
        .trajectory
        .get(query_frame)
        .ok_or(SimError::FrameOutOfRange {
            frame: query_frame,
            len: scene.trajectory.len(),
        })?;
    Ok(pose.world_to_cam(object))
}

/// Renders detections, poses and depths for frames `0..query_frame` plus the
/// query frame's pose.
pub fn render_query(
    scene: &SyntheticScene,
    scene_id: &str,
    query_id: &str,
    object_id: &str,
    query_frame: usize,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<RenderedQuery, SimError> {
    noise.validate()?;
    let object = *object_of(scene, object_id)?;
    if query_frame >= scene.trajectory.len() {
        return Err(SimError::FrameOutOfRange {
            frame: query_frame,
            len: scene.trajectory.len(),
        });
    }
    let never_visible = || SimError::NeverVisible {
        object: object_id.to_owned(),
        query_frame,
    };
    if !scene.trajectory[..query_frame]
        .iter()
        .any(|pose| observe(&object, pose, &scene.intr).is_some())
    {
        return Err(never_visible());
    }

    let intr = &scene.intr;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut entries = Vec::with_capacity(query_frame);
    let mut depths = BTreeMap::new();
    let mut poses = FramePoses::new();
    for (frame, pose) in scene.trajectory[..=query_frame].iter().enumerate() {
        let frame_idx = frame as i64;
        let keep_pose = !rng.random_bool(noise.pose_dropout);
        poses.insert(frame_idx, keep_pose.then_some(*pose));
        if frame == query_frame {
            break;
        }
        let (bbox, score, true_depth) = match observe(&object, pose, intr) {
            Some((px, p_cam)) => {
                let jitter = PixelPoint::new(
                    px.u + noise.pixel_noise_sigma * unit.sample(&mut rng),
                    px.v + noise.pixel_noise_sigma * unit.sample(&mut rng),
                );
                let size = (OBJECT_SIZE * intr.fx / p_cam.norm()).clamp(8.0, 200.0);
                let score = (visibility_score(&p_cam)
                    + noise.score_noise_sigma * unit.sample(&mut rng))
                .clamp(0.0, 1.0);
                (BBox::centered(jitter, size, size), score, p_cam.z)
            }
            None => {
                let w = rng.random_range(10.0..80.0);
                let h = rng.random_range(10.0..80.0);
                let x = rng.random_range(0.0..intr.width as f64 - w);
                let y = rng.random_range(0.0..intr.height as f64 - h);
                let score = rng.random_range(0.0..DISTRACTOR_SCORE_MAX);
                (BBox::new(x, y, w, h), score, rng.random_range(0.5..5.0))
            }
        };
        let k = 1.0 + noise.depth_scale_sigma * unit.sample(&mut rng);
        let b = noise.depth_shift_sigma * unit.sample(&mut rng);
        let depth = match noise.depth_random {
            Some((lo, hi)) => rng.random_range(lo..hi),
            None => (k * true_depth + b).max(MIN_DEPTH),
        };
        depths.insert(frame_idx, depth);
        entries.push(Detection {
            frame: frame_idx,
            bbox,
            score,
        });
    }
    let timeline = DetectionTimeline::new(query_id, query_frame as i64, entries)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    Ok(RenderedQuery {
        timeline,
        poses,
        depths: ScalarDepths(depths),
        gt: GroundTruth {
            query_id: query_id.to_owned(),
            scene_id: scene_id.to_owned(),
            object_world: object,
            query_pose: Some(scene.trajectory[query_frame]),
        },
    })
}

/// A query slot: which object, asked at which frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryChoice {
    pub object_id: String,
    pub query_frame: usize,
}

/// Draws queries whose object scored at least [`MIN_QUERY_PEAK_SCORE`]
/// somewhere in the first half of the video or later, before the query frame.
pub fn sample_queries(
    scene: &SyntheticScene,
    n: usize,
    seed: u64,
) -> Result<Vec<QueryChoice>, SimError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if scene.objects.is_empty() {
        return Err(SimError::InvalidConfig(
            "cannot draw queries from a scene without objects".into(),
        ));
    }
    let ids: Vec<&String> = scene.objects.keys().collect();
    let n_frames = scene.trajectory.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut found = None;
        for _ in 0..QUERY_RETRIES {
            let id = ids[rng.random_range(0..ids.len())];
            let query_frame = rng.random_range(n_frames / 2..n_frames).max(1);
            let object = &scene.objects[id];
            let strong = scene.trajectory[..query_frame].iter().any(|pose| {
                observe(object, pose, &scene.intr)
                    .is_some_and(|(_, p)| visibility_score(&p) >= MIN_QUERY_PEAK_SCORE)
            });
            if strong {
                found = Some(QueryChoice {
                    object_id: id.clone(),
                    query_frame,
                });
                break;
            }
        }
        out.push(found.ok_or(SimError::InfeasiblePlacement(QUERY_RETRIES))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenes: usize,
    pub queries_per_scene: usize,
    pub seed: u64,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    /// `(scene_id, scene)` in generation order.
    pub scenes: Vec<(String, SyntheticScene)>,
    /// Sorted by query id.
    pub queries: Vec<RenderedQuery>,
}

/// Generates `scenes × queries_per_scene` rendered queries.
pub fn simulate(config: &SimConfig) -> Result<SimDataset, SimError> {
    config.noise.validate()?;
    let mut scenes = Vec::with_capacity(config.scenes);
    let mut queries = Vec::with_capacity(config.scenes * config.queries_per_scene);
    for s in 0..config.scenes {
        let scene_seed = derive_seed(config.seed, s as u64);
        let scene = generate_scene(scene_seed, &config.scene)?;
        let scene_id = format!("scene{s:03}");
        let picks = sample_queries(
            &scene,
            config.queries_per_scene,
            derive_seed(scene_seed, u64::MAX),
        )?;
        for (q, pick) in picks.iter().enumerate() {
            let query_id = format!("{scene_id}_q{q:03}");
            queries.push(render_query(
                &scene,
                &scene_id,
                &query_id,
                &pick.object_id,
                pick.query_frame,
                &config.noise,
                derive_seed(scene_seed, q as u64),
            )?);
        }
        scenes.push((scene_id, scene));
    }
    queries.sort_by(|a, b| a.gt.query_id.cmp(&b.gt.query_id));
    Ok(SimDataset { scenes, queries })
}
