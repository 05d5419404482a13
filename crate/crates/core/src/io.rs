//! On-disk formats: JSON inputs and outputs of every command plus the binary
//! `DPTH` dense depth maps.
//!
//! Schema errors carry the file, the query id when known, and the JSON path
//! of the offending field.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::camera::{CameraIntrinsics, Pose, WorldPoint};
use crate::localize::{DepthLookup, DepthMap, DepthMaps, FramePoses, LocalizeError, ScalarDepths};
use crate::metrics::GroundTruth;
use crate::signal::{BBox, Detection, DetectionTimeline};

pub const DPTH_MAGIC: &[u8; 4] = b"DPTH";
pub const DPTH_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}{}: {field}: {message}", file.display(), QueryTag(query_id.as_deref()))]
    Schema {
        file: PathBuf,
        query_id: Option<String>,
        field: String,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Depth { path: PathBuf, message: String },
}

struct QueryTag<'a>(Option<&'a str>);

impl fmt::Display for QueryTag<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(q) => write!(f, " [query {q}]"),
            None => Ok(()),
        }
    }
}

fn schema(
    file: &Path,
    query_id: Option<&str>,
    field: impl Into<String>,
    message: impl fmt::Display,
) -> IoError {
    IoError::Schema {
        file: file.to_owned(),
        query_id: query_id.map(str::to_owned),
        field: field.into(),
        message: message.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_value(path: &Path) -> Result<Value, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| schema(path, None, "$", e))
}

/// Deserializes `value`, reporting the failing field relative to `prefix`.
fn from_value<T: DeserializeOwned>(
    file: &Path,
    query_id: Option<&str>,
    prefix: &str,
    value: Value,
) -> Result<T, IoError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let field = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_owned(),
            (false, _) => format!("{prefix}.{inner}"),
        };
        schema(file, query_id, field, e.into_inner())
    })
}

/// Reads a whole JSON file into `T` with path-aware errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        schema(path, None, field, e.into_inner())
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("in-memory values serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_frame(
    file: &Path,
    query_id: Option<&str>,
    field: &str,
    key: &str,
) -> Result<i64, IoError> {
    key.parse().map_err(|_| {
        schema(
            file,
            query_id,
            field,
            format!("frame key '{key}' is not an integer"),
        )
    })
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics, IoError> {
    let intr: CameraIntrinsics = read_json(path)?;
    intr.validate().map_err(|e| schema(path, None, ".", e))?;
    Ok(intr)
}

/// Contents of `poses.json`: one frame map shared by every query, or one per query.
#[derive(Debug, Clone, PartialEq)]
pub enum PosesInput {
    Shared(FramePoses),
    PerQuery(BTreeMap<String, FramePoses>),
}

impl PosesInput {
    pub fn for_query(&self, query_id: &str) -> Option<&FramePoses> {
        match self {
            PosesInput::Shared(p) => Some(p),
            PosesInput::PerQuery(m) => m.get(query_id),
        }
    }
}

pub fn pose_to_record(pose: Option<&Pose>) -> Option<[f64; 16]> {
    pose.map(Pose::to_row_major)
}

fn frame_poses(
    file: &Path,
    query_id: Option<&str>,
    prefix: &str,
    value: Value,
) -> Result<FramePoses, IoError> {
    let raw: BTreeMap<String, Option<[f64; 16]>> = from_value(file, query_id, prefix, value)?;
    let mut out = FramePoses::new();
    for (key, m) in raw {
        let field = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        let frame = parse_frame(file, query_id, &field, &key)?;
        let pose = m
            .map(|m| Pose::from_row_major(&m))
            .transpose()
            .map_err(|e| schema(file, query_id, &field, e))?;
        out.insert(frame, pose);
    }
    Ok(out)
}

pub fn read_poses(path: &Path) -> Result<PosesInput, IoError> {
    let value = parse_value(path)?;
    let Value::Object(map) = value else {
        return Err(schema(
            path,
            None,
            ".",
            "expected an object keyed by frame or by query id",
        ));
    };
    let nested = !map.is_empty() && map.values().all(Value::is_object);
    if nested {
        let mut out = BTreeMap::new();
        for (qid, v) in map {
            let poses = frame_poses(path, Some(&qid), &qid, v)?;
            out.insert(qid, poses);
        }
        Ok(PosesInput::PerQuery(out))
    } else {
        Ok(PosesInput::Shared(frame_poses(
            path,
            None,
            "",
            Value::Object(map),
        )?))
    }
}

/// Serializable frame map; integer keys keep frames in numeric order.
pub fn poses_record(poses: &FramePoses) -> BTreeMap<i64, Option<[f64; 16]>> {
    poses
        .iter()
        .map(|(f, p)| (*f, pose_to_record(p.as_ref())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame: i64,
    pub bbox: [f64; 4],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineRecord {
    pub query_id: String,
    pub query_frame: i64,
    pub entries: Vec<DetectionRecord>,
}

impl From<&DetectionTimeline> for TimelineRecord {
    fn from(t: &DetectionTimeline) -> Self {
        Self {
            query_id: t.query_id().to_owned(),
            query_frame: t.query_frame(),
            entries: t
                .entries()
                .iter()
                .map(|d| DetectionRecord {
                    frame: d.frame,
                    bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
                    score: d.score,
                })
                .collect(),
        }
    }
}

/// Reads `detections.json`: a single timeline object or an array of them.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionTimeline>, IoError> {
    let value = parse_value(path)?;
    let items: Vec<(String, Value)> = match value {
        Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("[{i}]"), v))
            .collect(),
        v @ Value::Object(_) => vec![(String::new(), v)],
        _ => {
            return Err(schema(
                path,
                None,
                ".",
                "expected a timeline object or an array of them",
            ))
        }
    };
    let mut out = Vec::with_capacity(items.len());
    let mut seen = std::collections::BTreeSet::new();
    for (prefix, v) in items {
        let qid = v.get("query_id").and_then(Value::as_str).map(str::to_owned);
        let rec: TimelineRecord = from_value(path, qid.as_deref(), &prefix, v)?;
        if !seen.insert(rec.query_id.clone()) {
            return Err(schema(
                path,
                Some(&rec.query_id),
                &prefix,
                "duplicate query_id",
            ));
        }
        let entries = rec
            .entries
            .iter()
            .map(|e| Detection {
                frame: e.frame,
                bbox: BBox::new(e.bbox[0], e.bbox[1], e.bbox[2], e.bbox[3]),
                score: e.score,
            })
            .collect();
        let timeline = DetectionTimeline::new(rec.query_id.clone(), rec.query_frame, entries)
            .map_err(|e| {
                schema(
                    path,
                    Some(&rec.query_id),
                    format!("{prefix}.entries").trim_start_matches('.'),
                    e,
                )
            })?;
        out.push(timeline);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DepthEntry {
    Scalar { values: BTreeMap<String, f64> },
    Map { dir: String },
}

/// Contents of `depths.json` with relative map directories resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum DepthsInput {
    Shared(DepthEntry),
    PerQuery(BTreeMap<String, DepthEntry>),
}

#[derive(Debug)]
pub struct DepthsFile {
    pub path: PathBuf,
    pub input: DepthsInput,
}

pub fn read_depths(path: &Path) -> Result<DepthsFile, IoError> {
    let value = parse_value(path)?;
    let input = if value.get("mode").is_some() {
        DepthsInput::Shared(from_value(path, None, "", value)?)
    } else {
        let Value::Object(map) = value else {
            return Err(schema(
                path,
                None,
                ".",
                "expected a depth entry or an object keyed by query id",
            ));
        };
        let mut out = BTreeMap::new();
        for (qid, v) in map {
            let entry: DepthEntry = from_value(path, Some(&qid), &qid, v)?;
            out.insert(qid, entry);
        }
        DepthsInput::PerQuery(out)
    };
    Ok(DepthsFile {
        path: path.to_owned(),
        input,
    })
}

/// A loaded depth source for one query.
#[derive(Debug, Clone)]
pub enum LoadedDepths {
    Scalar(ScalarDepths),
    Maps(DepthMaps),
}

impl DepthLookup for LoadedDepths {
    fn depth_at(&self, frame: i64, px: &crate::camera::PixelPoint) -> Result<f64, LocalizeError> {
        match self {
            LoadedDepths::Scalar(s) => s.depth_at(frame, px),
            LoadedDepths::Maps(m) => m.depth_at(frame, px),
        }
    }
}

impl DepthsFile {
    fn entry_for(&self, query_id: &str) -> Option<&DepthEntry> {
        match &self.input {
            DepthsInput::Shared(s) => Some(s),
            DepthsInput::PerQuery(m) => m.get(query_id),
        }
    }

    /// Loads the depth source used by `query_id`; `None` when the file has no entry for it.
    pub fn load(&self, query_id: &str) -> Result<Option<LoadedDepths>, IoError> {
        let Some(entry) = self.entry_for(query_id) else {
            return Ok(None);
        };
        let qid = match self.input {
            DepthsInput::Shared(_) => None,
            DepthsInput::PerQuery(_) => Some(query_id),
        };
        match entry {
            DepthEntry::Scalar { values } => {
                let mut out = BTreeMap::new();
                for (key, &d) in values {
                    let field = match qid {
                        Some(q) => format!("{q}.values.{key}"),
                        None => format!("values.{key}"),
                    };
                    let frame = parse_frame(&self.path, qid, &field, key)?;
                    if !(d > 0.0 && d.is_finite()) {
                        return Err(schema(
                            &self.path,
                            qid,
                            field,
                            format!("depth must be positive, got {d}"),
                        ));
                    }
                    out.insert(frame, d);
                }
                Ok(Some(LoadedDepths::Scalar(ScalarDepths(out))))
            }
            DepthEntry::Map { dir } => {
                let base = self.path.parent().unwrap_or(Path::new("."));
                Ok(Some(LoadedDepths::Maps(read_depth_dir(&base.join(dir))?)))
            }
        }
    }
}

/// Loads every `<frame>.dpth` file in `dir`.
pub fn read_depth_dir(dir: &Path) -> Result<DepthMaps, IoError> {
    let io_err = |source| IoError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut maps = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("dpth") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let frame: i64 = stem.parse().map_err(|_| IoError::Depth {
            path: path.clone(),
            message: "file name must be '<frame>.dpth'".into(),
        })?;
        maps.insert(frame, read_dpth(&path)?);
    }
    Ok(DepthMaps(maps))
}

pub fn encode_dpth(map: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(DPTH_HEADER_LEN + 4 * map.data.len());
    out.extend_from_slice(DPTH_MAGIC);
    out.extend_from_slice(&map.width.to_le_bytes());
    out.extend_from_slice(&map.height.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in &map.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dpth(bytes: &[u8]) -> Result<DepthMap, String> {
    if bytes.len() < DPTH_HEADER_LEN || &bytes[..4] != DPTH_MAGIC {
        return Err("missing DPTH header".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4-byte slice"));
    let (width, height) = (word(4), word(8));
    let n = width as usize * height as usize;
    let body = &bytes[DPTH_HEADER_LEN..];
    if body.len() != 4 * n {
        return Err(format!(
            "expected {} bytes of depth for {width}x{height}, found {}",
            4 * n,
            body.len()
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Ok(DepthMap {
        width,
        height,
        data,
    })
}

pub fn read_dpth(path: &Path) -> Result<DepthMap, IoError> {
    let bytes = fs::read(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_dpth(&bytes).map_err(|message| IoError::Depth {
        path: path.to_owned(),
        message,
    })
}

pub fn write_dpth(path: &Path, map: &DepthMap) -> Result<(), IoError> {
    fs::write(path, encode_dpth(map)).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub query_id: String,
    pub scene_id: String,
    pub object_world: [f64; 3],
    pub query_pose: Option<[f64; 16]>,
}

impl From<&GroundTruth> for GroundTruthRecord {
    fn from(g: &GroundTruth) -> Self {
        Self {
            query_id: g.query_id.clone(),
            scene_id: g.scene_id.clone(),
            object_world: g.object_world.coords.into(),
            query_pose: pose_to_record(g.query_pose.as_ref()),
        }
    }
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>, IoError> {
    let records: Vec<GroundTruthRecord> = read_json(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let query_pose = r
                .query_pose
                .map(|m| Pose::from_row_major(&m))
                .transpose()
                .map_err(|e| schema(path, Some(&r.query_id), format!("[{i}].query_pose"), e))?;
            if !r.object_world.iter().all(|v| v.is_finite()) {
                return Err(schema(
                    path,
                    Some(&r.query_id),
                    format!("[{i}].object_world"),
                    "non-finite coordinate",
                ));
            }
            Ok(GroundTruth {
                query_id: r.query_id,
                scene_id: r.scene_id,
                object_world: WorldPoint::from(r.object_world),
                query_pose,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorRecord {
    pub frame: i64,
    pub local_center: [f64; 3],
    pub world_center: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub seed: u64,
    pub intrinsics: CameraIntrinsics,
    pub objects: BTreeMap<String, [f64; 3]>,
    /// Camera-to-world, 16 values row-major per frame.
    pub trajectory: Vec<[f64; 16]>,
}
