//! VQ3D evaluation: per-query L2 and angular errors, and the dataset-level
//! QwP / Success / Success* ratios with an optional per-scene breakdown.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{Pose, WorldPoint};
use crate::localize::{LocalizationResult, QueryStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("zero-length displacement vector")]
    ZeroVector,
    #[error("no queries to evaluate")]
    EmptyInput,
    #[error("query '{0}' has no counterpart")]
    UnmatchedQuery(String),
    #[error("query '{0}' appears more than once")]
    DuplicateQuery(String),
    #[error("ground truth for query '{0}' has no query pose")]
    MissingGroundTruthPose(String),
    #[error("success threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("report invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub query_id: String,
    pub scene_id: String,
    pub object_world: WorldPoint,
    pub query_pose: Option<Pose>,
}

impl GroundTruth {
    /// Ground-truth displacement in the query camera frame.
    pub fn displacement(&self) -> Option<Vector3<f64>> {
        self.query_pose
            .map(|pose| pose.world_to_cam(&self.object_world))
    }
}

pub fn l2_error(pred: &Vector3<f64>, gt: &Vector3<f64>) -> f64 {
    (pred - gt).norm()
}

/// Angle between two displacement vectors, in `[0, π]`.
pub fn angular_error(pred: &Vector3<f64>, gt: &Vector3<f64>) -> Result<f64, MetricsError> {
    let (np, ng) = (pred.norm(), gt.norm());
    if np == 0.0 || ng == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok((pred.dot(gt) / (np * ng)).clamp(-1.0, 1.0).acos())
}

/// Metric block shared by the global report and every scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub qwp: f64,
    pub success: f64,
    /// 0 when `n_posed = 0`.
    pub success_star: f64,
    /// RMSE over Ok queries; absent when there are none.
    pub l2_rmse: Option<f64>,
    /// Mean angular error over Ok queries; absent when there are none.
    pub angle_mean: Option<f64>,
    pub n_total: usize,
    pub n_posed: usize,
    pub n_success: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    #[serde(flatten)]
    pub overall: MetricSummary,
    pub per_scene: BTreeMap<String, MetricSummary>,
}

#[derive(Default)]
struct Tally {
    n_total: usize,
    n_posed: usize,
    n_success: usize,
    sq_err: f64,
    angle_sum: f64,
    angle_n: usize,
}

impl Tally {
    fn add(&mut self, outcome: Option<(f64, Option<f64>)>, threshold: f64) {
        self.n_total += 1;
        if let Some((l2, angle)) = outcome {
            self.n_posed += 1;
            self.sq_err += l2 * l2;
            if l2 < threshold {
                self.n_success += 1;
            }
            if let Some(a) = angle {
                self.angle_sum += a;
                self.angle_n += 1;
            }
        }
    }

    fn summary(&self) -> MetricSummary {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        MetricSummary {
            qwp: ratio(self.n_posed, self.n_total),
            success: ratio(self.n_success, self.n_total),
            success_star: ratio(self.n_success, self.n_posed),
            l2_rmse: (self.n_posed > 0).then(|| (self.sq_err / self.n_posed as f64).sqrt()),
            angle_mean: (self.angle_n > 0).then(|| self.angle_sum / self.angle_n as f64),
            n_total: self.n_total,
            n_posed: self.n_posed,
            n_success: self.n_success,
        }
    }
}

/// Scores localization results against ground truth.
///
/// A query counts as posed iff its status is `Ok`; it succeeds iff it is
/// posed and its L2 error is strictly below `threshold`. L2 and angle are
/// aggregated over posed queries only.
pub fn evaluate(
    results: &[LocalizationResult],
    gts: &[GroundTruth],
    threshold: f64,
) -> Result<EvalReport, MetricsError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut by_id: BTreeMap<&str, &GroundTruth> = BTreeMap::new();
    for gt in gts {
        if by_id.insert(gt.query_id.as_str(), gt).is_some() {
            return Err(MetricsError::DuplicateQuery(gt.query_id.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    let mut overall = Tally::default();
    let mut scenes: BTreeMap<&str, Tally> = BTreeMap::new();
    for r in results {
        if !seen.insert(r.query_id.as_str()) {
            return Err(MetricsError::DuplicateQuery(r.query_id.clone()));
        }
        let gt = by_id
            .get(r.query_id.as_str())
            .ok_or_else(|| MetricsError::UnmatchedQuery(r.query_id.clone()))?;
        let outcome = match (r.status, r.displacement_vec()) {
            (QueryStatus::Ok, Some(pred)) => {
                let truth = gt
                    .displacement()
                    .ok_or_else(|| MetricsError::MissingGroundTruthPose(r.query_id.clone()))?;
                Some((l2_error(&pred, &truth), angular_error(&pred, &truth).ok()))
            }
            (QueryStatus::Ok, None) => {
                return Err(MetricsError::Invariant(format!(
                    "query '{}' is Ok but carries no displacement",
                    r.query_id
                )))
            }
            _ => None,
        };
        overall.add(outcome, threshold);
        scenes
            .entry(gt.scene_id.as_str())
            .or_default()
            .add(outcome, threshold);
    }
    if let Some(missing) = by_id.keys().find(|id| !seen.contains(*id)) {
        return Err(MetricsError::UnmatchedQuery((*missing).to_owned()));
    }
    let report = EvalReport {
        threshold,
        overall: overall.summary(),
        per_scene: scenes
            .into_iter()
            .map(|(k, t)| (k.to_owned(), t.summary()))
            .collect(),
    };
    check_invariants(&report)?;
    Ok(report)
}

fn check_invariants(report: &EvalReport) -> Result<(), MetricsError> {
    let check = |name: &str, m: &MetricSummary| {
        if !(m.n_success <= m.n_posed && m.n_posed <= m.n_total) {
            return Err(MetricsError::Invariant(format!("{name}: count ordering")));
        }
        if m.success > m.qwp || m.success > m.success_star {
            return Err(MetricsError::Invariant(format!(
                "{name}: success exceeds its bounds"
            )));
        }
        Ok(())
    };
    check("overall", &report.overall)?;
    for (scene, m) in &report.per_scene {
        check(scene, m)?;
    }
    let sum = |f: fn(&MetricSummary) -> usize| report.per_scene.values().map(f).sum::<usize>();
    let o = &report.overall;
    if sum(|m| m.n_total) != o.n_total
        || sum(|m| m.n_posed) != o.n_posed
        || sum(|m| m.n_success) != o.n_success
    {
        return Err(MetricsError::Invariant(
            "per-scene counts do not sum to the totals".into(),
        ));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.2}"))
}

fn table_row(out: &mut String, label: &str, m: &MetricSummary) {
    let succ_star = if m.n_posed == 0 {
        "n/a".to_owned()
    } else {
        format!("{:.2}", 100.0 * m.success_star)
    };
    let _ = writeln!(
        out,
        "{:<16} | {:>7.2} | {:>7} | {:>6} | {:>6} | {:>7.2}",
        label,
        100.0 * m.success,
        succ_star,
        fmt_opt(m.l2_rmse),
        fmt_opt(m.angle_mean),
        100.0 * m.qwp
    );
}

/// Fixed-width table with columns `Succ% | Succ*% | L2 | Angle | QwP%`.
pub fn format_table(report: &EvalReport, per_scene: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} | {:>7} | {:>7} | {:>6} | {:>6} | {:>7}",
        "", "Succ%", "Succ*%", "L2", "Angle", "QwP%"
    );
    let _ = writeln!(out, "{}", "-".repeat(16 + 7 + 7 + 6 + 6 + 7 + 5 * 3));
    table_row(&mut out, "overall", &report.overall);
    if per_scene {
        for (scene, m) in &report.per_scene {
            table_row(&mut out, scene, m);
        }
    }
    out
}
