//! Per-view unprojection, multi-view aggregation, triangulation and the
//! per-query localization pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::{debug, info, warn};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{self, CameraError, CameraIntrinsics, PixelPoint, Pose, WorldPoint};
use crate::signal::{
    self, DetectionTimeline, Padding, PeakParams, PeakSet, PeakStrategy, ResponsePeak, SignalError,
};

/// Default neighbourhood radius for NMS aggregation, meters.
pub const DEFAULT_NMS_RADIUS: f64 = 1.0;

/// Rays closer than this (radians) are flagged as a degenerate baseline.
pub const DEFAULT_MIN_RAY_ANGLE: f64 = std::f64::consts::PI / 180.0;

/// Window threshold used to model the end of a response track.
pub const TRACK_WINDOW_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizeError {
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("no points to aggregate")]
    EmptyInput,
    #[error("non-finite score {0}")]
    NonFiniteScore(f64),
    #[error("invalid aggregation strategy: {0}")]
    InvalidStrategy(String),
    #[error("triangulation needs at least 2 views, got {0}")]
    InsufficientViews(usize),
    #[error("rays do not determine a point (normal matrix is singular)")]
    SingularSystem,
    #[error("no depth available for frame {0}")]
    MissingDepth(i64),
    #[error("pixel ({u:.2}, {v:.2}) of frame {frame} lies outside the {width}×{height} depth map")]
    DepthOutOfBounds {
        frame: i64,
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("depth map for frame {frame}: {message}")]
    DepthMap { frame: i64, message: String },
}

/// A posed response frame ready for back-projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewObservation {
    pub frame: i64,
    pub pose: Pose,
    /// Bounding-box centroid.
    pub pixel: PixelPoint,
    pub depth: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredWorldPoint {
    pub frame: i64,
    pub point: WorldPoint,
    pub score: f64,
}

pub fn unproject_observation(
    obs: &ViewObservation,
    intr: &CameraIntrinsics,
) -> Result<ScoredWorldPoint, LocalizeError> {
    let point = camera::unproject(&obs.pixel, obs.depth, intr, &obs.pose)?;
    Ok(ScoredWorldPoint {
        frame: obs.frame,
        point,
        score: obs.score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AggregationStrategy {
    /// Point from the latest frame.
    Last,
    /// Unweighted centroid.
    Mean,
    /// Top-scoring point fused with its neighbours within `radius` meters.
    Nms { radius: f64 },
    /// Score-weighted average.
    DetWeighted,
}

impl AggregationStrategy {
    pub fn validate(&self) -> Result<(), LocalizeError> {
        match self {
            AggregationStrategy::Nms { radius } if !(*radius > 0.0 && radius.is_finite()) => {
                Err(LocalizeError::InvalidStrategy(format!(
                    "NMS radius must be positive, got {radius}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregationStrategy::Last => "last",
            AggregationStrategy::Mean => "mean",
            AggregationStrategy::Nms { .. } => "nms",
            AggregationStrategy::DetWeighted => "det-weighted",
        }
    }

    /// Parses a CLI name; `nms` takes the given radius.
    pub fn parse(name: &str, nms_radius: f64) -> Result<Self, String> {
        match name {
            "last" => Ok(AggregationStrategy::Last),
            "mean" => Ok(AggregationStrategy::Mean),
            "nms" => Ok(AggregationStrategy::Nms { radius: nms_radius }),
            "det-weighted" => Ok(AggregationStrategy::DetWeighted),
            other => Err(format!(
                "unknown aggregation strategy '{other}' (expected det-weighted|mean|nms|last)"
            )),
        }
    }
}

impl fmt::Display for AggregationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Output of [`aggregate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregated {
    pub point: WorldPoint,
    /// Set when every weight was zero and the unweighted mean was used instead.
    pub zero_weight_fallback: bool,
}

fn mean_of<'a>(points: impl Iterator<Item = &'a ScoredWorldPoint>) -> WorldPoint {
    let (sum, n) = points.fold((Vector3::zeros(), 0usize), |(s, n), p| {
        (s + p.point.coords, n + 1)
    });
    WorldPoint::from(sum / n as f64)
}

/// Score-weighted average, or `None` when the weights sum to zero.
fn weighted_mean<'a>(
    points: impl Iterator<Item = &'a ScoredWorldPoint> + Clone,
) -> Option<WorldPoint> {
    let total: f64 = points.clone().map(|p| p.score).sum();
    if total <= 0.0 {
        return None;
    }
    let sum = points.fold(Vector3::zeros(), |s, p| s + p.point.coords * p.score);
    Some(WorldPoint::from(sum / total))
}

pub fn aggregate(
    points: &[ScoredWorldPoint],
    strategy: AggregationStrategy,
) -> Result<Aggregated, LocalizeError> {
    strategy.validate()?;
    if points.is_empty() {
        return Err(LocalizeError::EmptyInput);
    }
    if let Some(p) = points.iter().find(|p| !p.score.is_finite()) {
        return Err(LocalizeError::NonFiniteScore(p.score));
    }
    let exact = |point| Aggregated {
        point,
        zero_weight_fallback: false,
    };
    let weighted_or_mean =
        |subset: &[&ScoredWorldPoint]| match weighted_mean(subset.iter().copied()) {
            Some(point) => exact(point),
            None => {
                warn!("all aggregation weights are zero; using the unweighted mean");
                Aggregated {
                    point: mean_of(subset.iter().copied()),
                    zero_weight_fallback: true,
                }
            }
        };
    Ok(match strategy {
        AggregationStrategy::Last => exact(points.iter().max_by_key(|p| p.frame).unwrap().point),
        AggregationStrategy::Mean => exact(mean_of(points.iter())),
        AggregationStrategy::DetWeighted => weighted_or_mean(&points.iter().collect::<Vec<_>>()),
        AggregationStrategy::Nms { radius } => {
            let top = points
                .iter()
                .max_by(|a, b| a.score.total_cmp(&b.score).then(a.frame.cmp(&b.frame)))
                .unwrap();
            let neighbourhood: Vec<_> = points
                .iter()
                .filter(|p| (p.point - top.point).norm() <= radius)
                .collect();
            weighted_or_mean(&neighbourhood)
        }
    })
}

/// A posed pixel observation used for triangulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayObservation {
    pub pose: Pose,
    pub pixel: PixelPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub point: WorldPoint,
    /// Smallest angle between any two viewing rays, radians.
    pub min_ray_angle: f64,
    /// `min_ray_angle` fell below the configured threshold.
    pub degenerate_baseline: bool,
}

/// Least-squares ray intersection: minimizes the summed squared
/// perpendicular distances from the point to every viewing ray.
pub fn triangulate(
    obs: &[RayObservation],
    intr: &CameraIntrinsics,
    min_ray_angle: f64,
) -> Result<Triangulation, LocalizeError> {
    if obs.len() < 2 {
        return Err(LocalizeError::InsufficientViews(obs.len()));
    }
    let rays = obs
        .iter()
        .map(|o| {
            Ok((
                o.pose.center(),
                camera::pixel_direction(&o.pixel, intr, &o.pose)?,
            ))
        })
        .collect::<Result<Vec<_>, CameraError>>()?;

    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (center, dir) in &rays {
        let proj = Matrix3::identity() - dir * dir.transpose();
        normal += proj;
        rhs += proj * center.coords;
    }
    let eig = SymmetricEigen::new(normal);
    if eig.eigenvalues.min() <= 1e-12 * rays.len() as f64 {
        return Err(LocalizeError::SingularSystem);
    }
    let point = normal
        .lu()
        .solve(&rhs)
        .ok_or(LocalizeError::SingularSystem)?;

    let mut min_angle = f64::INFINITY;
    for (i, (_, a)) in rays.iter().enumerate() {
        for (_, b) in &rays[i + 1..] {
            min_angle = min_angle.min(a.cross(b).norm().atan2(a.dot(b)));
        }
    }
    Ok(Triangulation {
        point: WorldPoint::from(point),
        min_ray_angle: min_angle,
        degenerate_baseline: min_angle < min_ray_angle,
    })
}

/// Squared perpendicular distance from `p` to the ray through `center` along unit `dir`.
pub fn ray_distance_sq(p: &WorldPoint, center: &WorldPoint, dir: &Vector3<f64>) -> f64 {
    let d = p - center;
    (d - dir * dir.dot(&d)).norm_squared()
}

/// Source of the metric depth at a response pixel.
pub trait DepthLookup: Sync {
    fn depth_at(&self, frame: i64, px: &PixelPoint) -> Result<f64, LocalizeError>;
}

/// One scalar depth per frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalarDepths(pub BTreeMap<i64, f64>);

impl DepthLookup for ScalarDepths {
    fn depth_at(&self, frame: i64, _px: &PixelPoint) -> Result<f64, LocalizeError> {
        self.0
            .get(&frame)
            .copied()
            .ok_or(LocalizeError::MissingDepth(frame))
    }
}

/// Dense depth image, row-major, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthMap {
    /// Nearest-pixel lookup.
    pub fn sample(&self, px: &PixelPoint) -> Option<f64> {
        let col = px.u.round();
        let row = px.v.round();
        if !(col >= 0.0 && row >= 0.0 && col < self.width as f64 && row < self.height as f64) {
            return None;
        }
        let idx = row as usize * self.width as usize + col as usize;
        self.data.get(idx).map(|&d| d as f64)
    }
}

/// In-memory dense maps keyed by frame.
#[derive(Debug, Clone, Default)]
pub struct DepthMaps(pub BTreeMap<i64, DepthMap>);

impl DepthLookup for DepthMaps {
    fn depth_at(&self, frame: i64, px: &PixelPoint) -> Result<f64, LocalizeError> {
        let map = self
            .0
            .get(&frame)
            .ok_or(LocalizeError::MissingDepth(frame))?;
        map.sample(px).ok_or(LocalizeError::DepthOutOfBounds {
            frame,
            u: px.u,
            v: px.v,
            width: map.width,
            height: map.height,
        })
    }
}

/// Camera poses by frame; `None` (or an absent key) means the pose is unavailable.
pub type FramePoses = BTreeMap<i64, Option<Pose>>;

fn pose_of(poses: &FramePoses, frame: i64) -> Option<Pose> {
    poses.get(&frame).copied().flatten()
}

/// Which response frames feed the 3D estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseStrategy {
    /// Last frame of the response track around the latest peak.
    LastTrack,
    LastDetPeak,
    TopDetPeak,
    DetPeaks,
}

impl ResponseStrategy {
    pub const ALL: [ResponseStrategy; 4] = [
        ResponseStrategy::LastTrack,
        ResponseStrategy::LastDetPeak,
        ResponseStrategy::TopDetPeak,
        ResponseStrategy::DetPeaks,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ResponseStrategy::LastTrack => "last-track",
            ResponseStrategy::LastDetPeak => "last-det-peak",
            ResponseStrategy::TopDetPeak => "top-det-peak",
            ResponseStrategy::DetPeaks => "det-peaks",
        }
    }
}

impl fmt::Display for ResponseStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResponseStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResponseStrategy::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown response strategy '{s}' (expected last-track|last-det-peak|top-det-peak|det-peaks)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthSource {
    /// Depth lookup per response frame.
    PerView,
    /// One point triangulated from all posed response frames.
    Triangulation,
}

impl DepthSource {
    pub const ALL: [DepthSource; 2] = [DepthSource::PerView, DepthSource::Triangulation];

    pub fn name(&self) -> &'static str {
        match self {
            DepthSource::PerView => "per-view",
            DepthSource::Triangulation => "triangulation",
        }
    }
}

impl fmt::Display for DepthSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DepthSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DepthSource::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown depth source '{s}' (expected per-view|triangulation)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizeConfig {
    pub peak_params: PeakParams,
    pub padding: Padding,
    pub response: ResponseStrategy,
    pub aggregation: AggregationStrategy,
    pub depth_source: DepthSource,
    /// When set, every selected peak is widened to its peak window.
    pub window_threshold: Option<f64>,
    /// Degenerate-baseline threshold for triangulation, radians.
    pub min_ray_angle: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            peak_params: PeakParams::default(),
            padding: Padding::Replicate,
            response: ResponseStrategy::DetPeaks,
            aggregation: AggregationStrategy::DetWeighted,
            depth_source: DepthSource::PerView,
            window_threshold: None,
            min_ray_angle: DEFAULT_MIN_RAY_ANGLE,
        }
    }
}

impl LocalizeConfig {
    pub fn validate(&self) -> Result<(), LocalizeError> {
        self.peak_params.validate()?;
        self.aggregation.validate()?;
        if let Some(t) = self.window_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(SignalError::InvalidThreshold(t).into());
            }
        }
        if !(self.min_ray_angle >= 0.0) {
            return Err(LocalizeError::InvalidStrategy(format!(
                "min_ray_angle must be non-negative, got {}",
                self.min_ray_angle
            )));
        }
        Ok(())
    }
}

/// Everything needed to localize one query.
#[derive(Clone, Copy)]
pub struct QueryTask<'a> {
    pub timeline: &'a DetectionTimeline,
    pub poses: &'a FramePoses,
    pub depths: &'a dyn DepthLookup,
    pub intr: &'a CameraIntrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryStatus {
    Ok,
    NoQueryPose,
    NoResponsePose,
    NoDetection,
    /// Triangulation requested but the posed rays do not determine a point.
    DegenerateTriangulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub query_id: String,
    pub status: QueryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world_point: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<[f64; 3]>,
}

impl LocalizationResult {
    fn failed(query_id: &str, status: QueryStatus) -> Self {
        Self {
            query_id: query_id.to_owned(),
            status,
            world_point: None,
            displacement: None,
        }
    }

    pub fn displacement_vec(&self) -> Option<Vector3<f64>> {
        self.displacement.map(Vector3::from)
    }

    pub fn world_point_vec(&self) -> Option<WorldPoint> {
        self.world_point.map(WorldPoint::from)
    }
}

/// Response frames chosen for a query, before pose filtering.
pub fn select_responses(
    timeline: &DetectionTimeline,
    config: &LocalizeConfig,
) -> Result<PeakSet, LocalizeError> {
    let mut peaks = signal::select_response_peaks(timeline, &config.peak_params, config.padding)?;
    if peaks.is_empty() {
        match signal::top_scoring_frame(timeline) {
            Some(top) => {
                debug!(
                    "{}: no peak survived, falling back to frame {}",
                    timeline.query_id(),
                    top.frame
                );
                peaks = PeakSet { peaks: vec![top] };
            }
            None => return Ok(PeakSet::default()),
        }
    }
    let chosen = match config.response {
        ResponseStrategy::LastDetPeak => signal::apply_strategy(&peaks, PeakStrategy::LastDetPeak)?,
        ResponseStrategy::TopDetPeak => signal::apply_strategy(&peaks, PeakStrategy::TopDetPeak)?,
        ResponseStrategy::DetPeaks => signal::apply_strategy(&peaks, PeakStrategy::DetPeaks)?,
        ResponseStrategy::LastTrack => {
            let last = signal::apply_strategy(&peaks, PeakStrategy::LastDetPeak)?;
            let track = signal::expand_peak_set(
                timeline,
                &last,
                TRACK_WINDOW_THRESHOLD,
                &config.peak_params,
                config.padding,
            )?;
            PeakSet {
                peaks: track.peaks.last().copied().into_iter().collect(),
            }
        }
    };
    match config.window_threshold {
        Some(t) => Ok(signal::expand_peak_set(
            timeline,
            &chosen,
            t,
            &config.peak_params,
            config.padding,
        )?),
        None => Ok(chosen),
    }
}

/// Localizes one query: response selection, back-projection or triangulation,
/// aggregation, and the displacement in the query camera frame.
///
/// Per-query failures are reported through [`QueryStatus`]; `Err` is reserved
/// for malformed input (missing depth, bad configuration, invalid geometry).
pub fn localize_query(
    task: &QueryTask<'_>,
    config: &LocalizeConfig,
) -> Result<LocalizationResult, LocalizeError> {
    config.validate()?;
    let timeline = task.timeline;
    let qid = timeline.query_id();
    if timeline.is_empty() {
        return Ok(LocalizationResult::failed(qid, QueryStatus::NoDetection));
    }
    let responses = select_responses(timeline, config)?;
    let posed: Vec<(ResponsePeak, Pose)> = responses
        .peaks
        .iter()
        .filter_map(|p| pose_of(task.poses, p.frame).map(|pose| (*p, pose)))
        .collect();
    if posed.is_empty() {
        return Ok(LocalizationResult::failed(qid, QueryStatus::NoResponsePose));
    }

    let world_point = match config.depth_source {
        DepthSource::PerView => {
            let points = posed
                .iter()
                .map(|(peak, pose)| {
                    let pixel = peak.bbox.centroid();
                    let obs = ViewObservation {
                        frame: peak.frame,
                        pose: *pose,
                        pixel,
                        depth: task.depths.depth_at(peak.frame, &pixel)?,
                        score: peak.score,
                    };
                    unproject_observation(&obs, task.intr)
                })
                .collect::<Result<Vec<_>, _>>()?;
            aggregate(&points, config.aggregation)?.point
        }
        DepthSource::Triangulation => {
            let rays: Vec<_> = posed
                .iter()
                .map(|(peak, pose)| RayObservation {
                    pose: *pose,
                    pixel: peak.bbox.centroid(),
                })
                .collect();
            match triangulate(&rays, task.intr, config.min_ray_angle) {
                Ok(tri) => {
                    if tri.degenerate_baseline {
                        info!(
                            "{qid}: degenerate baseline (min ray angle {:.4}°)",
                            tri.min_ray_angle.to_degrees()
                        );
                    }
                    let fused = ScoredWorldPoint {
                        frame: posed.iter().map(|(p, _)| p.frame).max().unwrap(),
                        point: tri.point,
                        score: 1.0,
                    };
                    aggregate(&[fused], config.aggregation)?.point
                }
                Err(LocalizeError::InsufficientViews(_) | LocalizeError::SingularSystem) => {
                    return Ok(LocalizationResult::failed(
                        qid,
                        QueryStatus::DegenerateTriangulation,
                    ));
                }
                Err(e) => return Err(e),
            }
        }
    };

    let mut result = LocalizationResult {
        query_id: qid.to_owned(),
        status: QueryStatus::NoQueryPose,
        world_point: Some(world_point.coords.into()),
        displacement: None,
    };
    if let Some(query_pose) = pose_of(task.poses, timeline.query_frame()) {
        result.displacement = Some(camera::world_to_cam(&world_point, &query_pose).into());
        result.status = QueryStatus::Ok;
    }
    Ok(result)
}

/// Localizes many queries on the current rayon pool; output is sorted by query id.
///
/// The first input error aborts the batch and is returned with its query id.
pub fn localize_batch(
    tasks: &[QueryTask<'_>],
    config: &LocalizeConfig,
) -> Result<Vec<LocalizationResult>, (String, LocalizeError)> {
    config.validate().map_err(|e| (String::new(), e))?;
    let mut results = tasks
        .par_iter()
        .map(|t| localize_query(t, config).map_err(|e| (t.timeline.query_id().to_owned(), e)))
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    Ok(results)
}
