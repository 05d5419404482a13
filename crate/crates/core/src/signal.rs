//! Detection-score timelines and peak-based response-frame selection.
//!
//! The peak search follows the usual `find_peaks` semantics: strict local
//! maxima (plateaus resolve to their floor midpoint), then a greedy distance
//! filter, then a windowed prominence filter, then a width filter measured at
//! `height − prominence · rel_height`.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::PixelPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error(
        "median kernel must be odd, positive and at most 2·len − 1 (kernel {kernel}, len {len})"
    )]
    InvalidKernel { kernel: usize, len: usize },
    #[error("peak search needs at least 3 samples, got {0}")]
    TooShort(usize),
    #[error("invalid peak parameters: {0}")]
    InvalidParams(String),
    #[error("invalid timeline: {0}")]
    InvalidTimeline(String),
    #[error("window threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("peak set is empty")]
    EmptyPeaks,
    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Axis-aligned box `(x, y, w, h)` in pixels, `(x, y)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Box of size `w × h` centered on `c`.
    pub fn centered(c: PixelPoint, w: f64, h: f64) -> Self {
        Self {
            x: c.u - 0.5 * w,
            y: c.v - 0.5 * h,
            w,
            h,
        }
    }

    pub fn centroid(&self) -> PixelPoint {
        PixelPoint::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }
}

/// Top-1 detection on one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: i64,
    pub bbox: BBox,
    pub score: f64,
}

/// Per-frame top-1 detections preceding (and possibly including) the query frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTimeline {
    query_id: String,
    query_frame: i64,
    entries: Vec<Detection>,
}

impl DetectionTimeline {
    pub fn new(
        query_id: impl Into<String>,
        query_frame: i64,
        entries: Vec<Detection>,
    ) -> Result<Self, SignalError> {
        for (i, e) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.score) {
                return Err(SignalError::InvalidTimeline(format!(
                    "entries[{i}].score = {} is outside [0, 1]",
                    e.score
                )));
            }
            let b = &e.bbox;
            if ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) || b.w < 0.0 || b.h < 0.0 {
                return Err(SignalError::InvalidTimeline(format!(
                    "entries[{i}].bbox is malformed"
                )));
            }
            if e.frame > query_frame {
                return Err(SignalError::InvalidTimeline(format!(
                    "entries[{i}].frame = {} is after the query frame {query_frame}",
                    e.frame
                )));
            }
            if i > 0 && entries[i - 1].frame >= e.frame {
                return Err(SignalError::InvalidTimeline(format!(
                    "entries[{i}].frame = {} does not strictly increase",
                    e.frame
                )));
            }
        }
        Ok(Self {
            query_id: query_id.into(),
            query_frame,
            entries,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn query_frame(&self) -> i64 {
        self.query_frame
    }

    pub fn entries(&self) -> &[Detection] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }
}

/// Edge handling for the median filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Replicate,
    Zero,
}

impl FromStr for Padding {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replicate" => Ok(Padding::Replicate),
            "zero" => Ok(Padding::Zero),
            other => Err(format!(
                "unknown padding '{other}' (expected zero|replicate)"
            )),
        }
    }
}

/// Peak search configuration, in samples (frames) and score units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    pub median_kernel: usize,
    pub distance: usize,
    pub width: f64,
    pub prominence: f64,
    pub wlen: usize,
    pub rel_height: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            median_kernel: 5,
            distance: 25,
            width: 3.0,
            prominence: 0.2,
            wlen: 50,
            rel_height: 0.5,
        }
    }
}

impl PeakParams {
    pub fn validate(&self) -> Result<(), SignalError> {
        if self.median_kernel == 0 || self.median_kernel.is_multiple_of(2) {
            return Err(SignalError::InvalidParams(format!(
                "median_kernel must be odd and ≥ 1, got {}",
                self.median_kernel
            )));
        }
        if self.distance < 1 {
            return Err(SignalError::InvalidParams("distance must be ≥ 1".into()));
        }
        if !(self.width >= 0.0) || !self.width.is_finite() {
            return Err(SignalError::InvalidParams(format!(
                "width must be ≥ 0, got {}",
                self.width
            )));
        }
        if !self.prominence.is_finite() {
            return Err(SignalError::InvalidParams(
                "prominence must be finite".into(),
            ));
        }
        if self.wlen < 2 {
            return Err(SignalError::InvalidParams(format!(
                "wlen must be ≥ 2, got {}",
                self.wlen
            )));
        }
        if !(self.rel_height > 0.0 && self.rel_height <= 1.0) {
            return Err(SignalError::InvalidParams(format!(
                "rel_height must lie in (0, 1], got {}",
                self.rel_height
            )));
        }
        Ok(())
    }
}

impl fmt::Display for PeakParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "median_kernel={} distance={} width={} prominence={} wlen={} rel_height={}",
            self.median_kernel,
            self.distance,
            self.width,
            self.prominence,
            self.wlen,
            self.rel_height
        )
    }
}

/// Median of each `kernel`-sized window centered on every sample.
pub fn median_filter(
    scores: &[f64],
    kernel: usize,
    padding: Padding,
) -> Result<Vec<f64>, SignalError> {
    let n = scores.len();
    if kernel == 0 || kernel.is_multiple_of(2) || (n > 0 && kernel > 2 * n - 1) {
        return Err(SignalError::InvalidKernel { kernel, len: n });
    }
    let half = (kernel / 2) as isize;
    let mut window = Vec::with_capacity(kernel);
    let out = (0..n as isize)
        .map(|i| {
            window.clear();
            window.extend((i - half..=i + half).map(|j| {
                if (0..n as isize).contains(&j) {
                    scores[j as usize]
                } else {
                    match padding {
                        Padding::Replicate => scores[j.clamp(0, n as isize - 1) as usize],
                        Padding::Zero => 0.0,
                    }
                }
            }));
            let mid = window.len() / 2;
            *window.select_nth_unstable_by(mid, f64::total_cmp).1
        })
        .collect();
    Ok(out)
}

/// A peak in a sampled signal together with its measured properties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub height: f64,
    pub prominence: f64,
    pub left_base: usize,
    pub right_base: usize,
    pub width: f64,
    pub left_ip: f64,
    pub right_ip: f64,
}

/// Strict local maxima; a flat top resolves to its floor midpoint.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while n >= 3 && i < n - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    peaks
}

/// Greedy distance filter: higher peaks first (ties favour the later sample),
/// each kept peak suppresses any other within `distance − 1` samples.
pub fn filter_by_distance(x: &[f64], peaks: &[usize], distance: usize) -> Vec<usize> {
    let mut keep = vec![true; peaks.len()];
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| x[peaks[a]].total_cmp(&x[peaks[b]]));
    for &j in order.iter().rev() {
        if !keep[j] {
            continue;
        }
        let mut k = j;
        while k > 0 && peaks[j] - peaks[k - 1] < distance {
            keep[k - 1] = false;
            k -= 1;
        }
        let mut k = j + 1;
        while k < peaks.len() && peaks[k] - peaks[j] < distance {
            keep[k] = false;
            k += 1;
        }
    }
    peaks
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(&p, _)| p)
        .collect()
}

/// Prominence of `peak` within a window of `wlen / 2` samples on each side.
///
/// Returns `(prominence, left_base, right_base)`.
pub fn peak_prominence(x: &[f64], peak: usize, wlen: usize) -> (f64, usize, usize) {
    let half = wlen / 2;
    let lo = peak.saturating_sub(half);
    let hi = (peak + half).min(x.len() - 1);
    let h = x[peak];

    let (mut left_min, mut left_base) = (h, peak);
    let mut i = peak as isize;
    while i >= lo as isize && x[i as usize] <= h {
        if x[i as usize] < left_min {
            left_min = x[i as usize];
            left_base = i as usize;
        }
        i -= 1;
    }
    let (mut right_min, mut right_base) = (h, peak);
    let mut i = peak;
    while i <= hi && x[i] <= h {
        if x[i] < right_min {
            right_min = x[i];
            right_base = i;
        }
        i += 1;
    }
    (h - left_min.max(right_min), left_base, right_base)
}

/// Width at `height − prominence · rel_height`, interpolated linearly and
/// bounded by the prominence bases. Returns `(width, left_ip, right_ip)`.
pub fn peak_width(
    x: &[f64],
    peak: usize,
    prominence: f64,
    left_base: usize,
    right_base: usize,
    rel_height: f64,
) -> (f64, f64, f64) {
    let eval = x[peak] - prominence * rel_height;

    let mut i = peak;
    while left_base < i && eval < x[i] {
        i -= 1;
    }
    let mut left_ip = i as f64;
    if x[i] < eval {
        left_ip += (eval - x[i]) / (x[i + 1] - x[i]);
    }

    let mut i = peak;
    while i < right_base && eval < x[i] {
        i += 1;
    }
    let mut right_ip = i as f64;
    if x[i] < eval {
        right_ip -= (eval - x[i]) / (x[i - 1] - x[i]);
    }
    (right_ip - left_ip, left_ip, right_ip)
}

/// Peak search with distance, prominence and width filtering (in that order).
pub fn find_peaks(x: &[f64], params: &PeakParams) -> Result<Vec<Peak>, SignalError> {
    params.validate()?;
    if x.len() < 3 {
        return Err(SignalError::TooShort(x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SignalError::InvalidParams(
            "signal contains non-finite samples".into(),
        ));
    }
    let candidates = filter_by_distance(x, &local_maxima(x), params.distance);
    let peaks = candidates
        .into_iter()
        .filter_map(|p| {
            let (prominence, left_base, right_base) = peak_prominence(x, p, params.wlen);
            if prominence < params.prominence {
                return None;
            }
            let (width, left_ip, right_ip) =
                peak_width(x, p, prominence, left_base, right_base, params.rel_height);
            (width >= params.width).then_some(Peak {
                index: p,
                height: x[p],
                prominence,
                left_base,
                right_base,
                width,
                left_ip,
                right_ip,
            })
        })
        .collect();
    Ok(peaks)
}

/// A selected response frame: the peak location paired with that frame's raw detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePeak {
    /// Position in the timeline.
    pub index: usize,
    pub frame: i64,
    pub bbox: BBox,
    /// Raw (unsmoothed) detection score.
    pub score: f64,
    pub prominence: f64,
    pub width: f64,
}

impl ResponsePeak {
    fn from_entry(index: usize, entry: &Detection, prominence: f64, width: f64) -> Self {
        Self {
            index,
            frame: entry.frame,
            bbox: entry.bbox,
            score: entry.score,
            prominence,
            width,
        }
    }
}

/// Response peaks sorted by frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakSet {
    pub peaks: Vec<ResponsePeak>,
}

impl PeakSet {
    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn frames(&self) -> Vec<i64> {
        self.peaks.iter().map(|p| p.frame).collect()
    }
}

/// Smooths the timeline scores and pairs each surviving peak with its raw detection.
///
/// Timelines shorter than three samples yield an empty set.
pub fn select_response_peaks(
    timeline: &DetectionTimeline,
    params: &PeakParams,
    padding: Padding,
) -> Result<PeakSet, SignalError> {
    params.validate()?;
    if timeline.len() < 3 {
        return Ok(PeakSet::default());
    }
    let smoothed = median_filter(&timeline.scores(), params.median_kernel, padding)?;
    let peaks = find_peaks(&smoothed, params)?
        .into_iter()
        .map(|p| {
            ResponsePeak::from_entry(p.index, &timeline.entries()[p.index], p.prominence, p.width)
        })
        .collect();
    Ok(PeakSet { peaks })
}

/// The single highest-scoring frame (ties favour the later frame). Used when no peak survives.
pub fn top_scoring_frame(timeline: &DetectionTimeline) -> Option<ResponsePeak> {
    timeline
        .entries()
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.score.total_cmp(&b.score))
        .map(|(i, e)| ResponsePeak::from_entry(i, e, 0.0, 0.0))
}

/// Maximal contiguous run around `peak` whose scores stay at or above
/// `threshold · scores[peak]`.
pub fn expand_peak_window(
    scores: &[f64],
    peak: usize,
    threshold: f64,
) -> Result<RangeInclusive<usize>, SignalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SignalError::InvalidThreshold(threshold));
    }
    if peak >= scores.len() {
        return Err(SignalError::IndexOutOfRange {
            index: peak,
            len: scores.len(),
        });
    }
    let bound = threshold * scores[peak];
    let mut lo = peak;
    while lo > 0 && scores[lo - 1] >= bound {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < scores.len() && scores[hi + 1] >= bound {
        hi += 1;
    }
    Ok(lo..=hi)
}

/// Expands every peak into its window on the smoothed curve; returns the
/// union as response peaks carrying raw detections, sorted by frame.
pub fn expand_peak_set(
    timeline: &DetectionTimeline,
    peaks: &PeakSet,
    threshold: f64,
    params: &PeakParams,
    padding: Padding,
) -> Result<PeakSet, SignalError> {
    if peaks.is_empty() {
        return Ok(PeakSet::default());
    }
    let smoothed = if timeline.len() >= 3 {
        median_filter(&timeline.scores(), params.median_kernel, padding)?
    } else {
        timeline.scores()
    };
    let mut members = vec![false; timeline.len()];
    for p in &peaks.peaks {
        for i in expand_peak_window(&smoothed, p.index, threshold)? {
            members[i] = true;
        }
    }
    let expanded = members
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| {
            peaks
                .peaks
                .iter()
                .find(|p| p.index == i)
                .copied()
                .unwrap_or_else(|| ResponsePeak::from_entry(i, &timeline.entries()[i], 0.0, 0.0))
        })
        .collect();
    Ok(PeakSet { peaks: expanded })
}

/// How response frames are chosen among the detected peaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeakStrategy {
    /// The latest peak.
    LastDetPeak,
    /// The highest-scoring peak (ties: later frame).
    TopDetPeak,
    /// Every peak.
    DetPeaks,
}

pub fn apply_strategy(peaks: &PeakSet, strategy: PeakStrategy) -> Result<PeakSet, SignalError> {
    if peaks.is_empty() {
        return Err(SignalError::EmptyPeaks);
    }
    let pick = |p: &ResponsePeak| PeakSet { peaks: vec![*p] };
    Ok(match strategy {
        PeakStrategy::LastDetPeak => pick(peaks.peaks.iter().max_by_key(|p| p.frame).unwrap()),
        PeakStrategy::TopDetPeak => pick(
            peaks
                .peaks
                .iter()
                .max_by(|a, b| a.score.total_cmp(&b.score).then(a.frame.cmp(&b.frame)))
                .unwrap(),
        ),
        PeakStrategy::DetPeaks => peaks.clone(),
    })
}
