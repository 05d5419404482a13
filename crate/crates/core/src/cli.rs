//! `egoloc` command-line interface.
//!
//! Exit codes: 0 success, 2 input error, 3 internal invariant violation.
//! Logging is controlled by `EGOLOC_LOG` (error, warn, info, debug).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::align::{self, Sim3, Sim3Record};
use crate::camera::{CameraIntrinsics, WorldPoint};
use crate::io::{
    self, AnchorRecord, GroundTruthRecord, IoError, LoadedDepths, PosesInput, SceneRecord,
    TimelineRecord,
};
use crate::localize::{
    self, AggregationStrategy, DepthSource, FramePoses, LocalizationResult, LocalizeConfig,
    LocalizeError, QueryTask, ResponseStrategy, DEFAULT_MIN_RAY_ANGLE, DEFAULT_NMS_RADIUS,
};
use crate::metrics::{self, EvalReport, GroundTruth, MetricsError};
use crate::signal::{self, DetectionTimeline, Padding, PeakParams};
use crate::simkit::{self, NoiseConfig, SceneConfig, SimConfig, SimDataset};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Invariant(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<simkit::SimError> for CliError {
    fn from(e: simkit::SimError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn localize_error((qid, e): (String, LocalizeError)) -> CliError {
    if qid.is_empty() {
        CliError::Input(e.to_string())
    } else {
        CliError::Input(format!("query {qid}: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "egoloc",
    version,
    about = "Visual-query 3D localization toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Localize every query and write a JSON array of results.
    Localize(LocalizeArgs),
    /// Score results against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset directory.
    Simulate(SimulateArgs),
    /// Run the strategy cross-product and the peak-window sweep on a dataset.
    Ablate(AblateArgs),
    /// Fit a Sim3 between local and world anchor centers.
    Align(AlignArgs),
    /// Show detected peaks and write score plot data.
    Peaks(PeaksArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PeakArgs {
    /// Median filter kernel, frames (odd).
    #[arg(long, default_value_t = 5)]
    pub median_kernel: usize,
    /// Minimum distance between peaks, frames.
    #[arg(long, default_value_t = 25)]
    pub distance: usize,
    /// Minimum peak width, frames.
    #[arg(long, default_value_t = 3.0)]
    pub width: f64,
    /// Minimum peak prominence, score units.
    #[arg(long, default_value_t = 0.2)]
    pub prominence: f64,
    /// Prominence window, frames.
    #[arg(long, default_value_t = 50)]
    pub wlen: usize,
    /// Relative height at which widths are measured.
    #[arg(long, default_value_t = 0.5)]
    pub rel_height: f64,
    /// Median filter edge handling: replicate or zero.
    #[arg(long, default_value = "replicate")]
    pub pad: Padding,
}

impl PeakArgs {
    pub fn params(&self) -> PeakParams {
        PeakParams {
            median_kernel: self.median_kernel,
            distance: self.distance,
            width: self.width,
            prominence: self.prominence,
            wlen: self.wlen,
            rel_height: self.rel_height,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct StrategyArgs {
    /// Multi-view aggregation: det-weighted, mean, nms or last.
    #[arg(long, default_value = "det-weighted")]
    pub strategy: String,
    /// NMS fusion radius, meters.
    #[arg(long, default_value_t = DEFAULT_NMS_RADIUS)]
    pub nms_radius: f64,
    /// Response frames: last-track, last-det-peak, top-det-peak or det-peaks.
    #[arg(long, default_value = "det-peaks")]
    pub response: ResponseStrategy,
    /// Depth source: per-view or triangulation.
    #[arg(long, default_value = "per-view")]
    pub depth_source: DepthSource,
    /// Expand each response peak to its window at this fraction of the peak score.
    #[arg(long)]
    pub window_threshold: Option<f64>,
    /// Triangulation baseline warning threshold, degrees.
    #[arg(long, default_value_t = DEFAULT_MIN_RAY_ANGLE.to_degrees())]
    pub min_ray_angle_deg: f64,
}

#[derive(Debug, Clone, Args)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub depths: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[command(flatten)]
    pub peaks: PeakArgs,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Success threshold on the L2 error, meters.
    #[arg(long)]
    pub threshold: f64,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Add one table row per scene.
    #[arg(long)]
    pub per_scene: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenes: usize,
    /// Queries per scene.
    #[arg(long)]
    pub queries: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SceneConfig::default().n_frames)]
    pub frames: usize,
    #[arg(long, default_value_t = SceneConfig::default().n_objects)]
    pub objects: usize,
    /// Room side length, meters.
    #[arg(long, default_value_t = SceneConfig::default().room_extent)]
    pub room_extent: f64,
    #[arg(long, default_value_t = 0.0)]
    pub depth_scale_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub depth_shift_sigma: f64,
    /// Replace depths with uniform draws from LO,HI meters (default 0.1,10).
    #[arg(long, num_args = 0..=1, default_missing_value = "0.1,10", value_parser = parse_range)]
    pub depth_random: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0.0)]
    pub pose_dropout: f64,
    #[arg(long, default_value_t = 0.0)]
    pub score_noise_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pixel_noise_sigma: f64,
    /// Threshold used for the printed oracle success rate, meters.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    /// Dataset directory as written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub threshold: f64,
    /// Output directory (defaults to the dataset directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Peak-window thresholds for the sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.9,1.0")]
    pub windows: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_NMS_RADIUS)]
    pub nms_radius: f64,
    #[command(flatten)]
    pub peaks: PeakArgs,
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub anchors: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// RANSAC inlier threshold, meters.
    #[arg(long, default_value_t = align::DEFAULT_MAX_ERROR)]
    pub max_error: f64,
    #[arg(long, default_value_t = align::DEFAULT_RANSAC_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Plain least-squares fit on all anchors, without RANSAC.
    #[arg(long)]
    pub exact: bool,
    /// Poses file to move into the world frame.
    #[arg(long, requires = "poses_out")]
    pub poses: Option<PathBuf>,
    #[arg(long, requires = "poses")]
    pub poses_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PeaksArgs {
    /// detections.json
    #[arg(long)]
    pub scores: PathBuf,
    /// Only this query.
    #[arg(long)]
    pub query_id: Option<String>,
    /// Plot data CSV: query_id, frame, raw, smoothed, is_peak.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub peaks: PeakArgs,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

fn thread_pool(parallelism: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if parallelism == Some(0) {
        return Err(CliError::Input("--parallelism must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))
}

fn localize_config(s: &StrategyArgs, p: &PeakArgs) -> Result<LocalizeConfig, CliError> {
    let config = LocalizeConfig {
        peak_params: p.params(),
        padding: p.pad,
        response: s.response,
        aggregation: AggregationStrategy::parse(&s.strategy, s.nms_radius)
            .map_err(CliError::Input)?,
        depth_source: s.depth_source,
        window_threshold: s.window_threshold,
        min_ray_angle: s.min_ray_angle_deg.to_radians(),
    };
    config
        .validate()
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok(config)
}

/// Inputs of one localization run, loaded and validated.
pub struct Dataset {
    pub intr: CameraIntrinsics,
    pub queries: Vec<(DetectionTimeline, FramePoses, LoadedDepths)>,
}

impl Dataset {
    pub fn load(
        detections: &Path,
        poses: &Path,
        intrinsics: &Path,
        depths: &Path,
    ) -> Result<Self, CliError> {
        let intr = io::read_intrinsics(intrinsics)?;
        let poses = io::read_poses(poses)?;
        let depths = io::read_depths(depths)?;
        let timelines = io::read_detections(detections)?;
        let mut queries = Vec::with_capacity(timelines.len());
        for t in timelines {
            let qid = t.query_id().to_owned();
            let frame_poses = poses.for_query(&qid).cloned().ok_or_else(|| {
                CliError::Input(format!("{}: no poses for query {qid}", poses_name(&poses)))
            })?;
            let d = depths.load(&qid)?.ok_or_else(|| {
                CliError::Input(format!(
                    "{}: no depths for query {qid}",
                    depths.path.display()
                ))
            })?;
            queries.push((t, frame_poses, d));
        }
        Ok(Self { intr, queries })
    }

    pub fn from_dir(dir: &Path) -> Result<Self, CliError> {
        Self::load(
            &dir.join("detections.json"),
            &dir.join("poses.json"),
            &dir.join("intrinsics.json"),
            &dir.join("depths.json"),
        )
    }

    pub fn tasks(&self) -> Vec<QueryTask<'_>> {
        self.queries
            .iter()
            .map(|(timeline, poses, depths)| QueryTask {
                timeline,
                poses,
                depths,
                intr: &self.intr,
            })
            .collect()
    }
}

fn poses_name(p: &PosesInput) -> &'static str {
    match p {
        PosesInput::Shared(_) => "poses.json",
        PosesInput::PerQuery(_) => "poses.json (per query)",
    }
}

fn run_batch(
    pool: &rayon::ThreadPool,
    tasks: &[QueryTask<'_>],
    config: &LocalizeConfig,
) -> Result<Vec<LocalizationResult>, CliError> {
    pool.install(|| localize::localize_batch(tasks, config))
        .map_err(localize_error)
}

fn cmd_localize(args: &LocalizeArgs) -> Result<(), CliError> {
    let config = localize_config(&args.strategy, &args.peaks)?;
    let data = Dataset::load(
        &args.detections,
        &args.poses,
        &args.intrinsics,
        &args.depths,
    )?;
    let pool = thread_pool(args.parallelism)?;
    let results = run_batch(&pool, &data.tasks(), &config)?;
    io::write_json(&args.out, &results)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &results {
        *counts.entry(format!("{:?}", r.status)).or_default() += 1;
    }
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "localized {} queries ({})",
        results.len(),
        summary.join(", ")
    );
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let results: Vec<LocalizationResult> = io::read_json(&args.pred)?;
    let gts = io::read_ground_truth(&args.gt)?;
    let report = metrics::evaluate(&results, &gts, args.threshold)?;
    io::write_json(&args.out, &report)?;
    print!("{}", metrics::format_table(&report, args.per_scene));
    Ok(())
}

#[derive(Serialize)]
struct ScalarDepthRecord {
    mode: &'static str,
    values: BTreeMap<i64, f64>,
}

#[derive(Serialize)]
struct SceneFile<'a> {
    config: &'a SimConfig,
    scenes: Vec<SceneRecord>,
}

/// Writes a dataset directory in the formats consumed by `localize` and `evaluate`.
pub fn write_dataset(dir: &Path, config: &SimConfig, data: &SimDataset) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let scenes = data
        .scenes
        .iter()
        .map(|(id, s)| SceneRecord {
            scene_id: id.clone(),
            seed: s.seed,
            intrinsics: s.intr,
            objects: s
                .objects
                .iter()
                .map(|(k, p)| (k.clone(), p.coords.into()))
                .collect(),
            trajectory: s.trajectory.iter().map(|p| p.to_row_major()).collect(),
        })
        .collect();
    io::write_json(&dir.join("scene.json"), &SceneFile { config, scenes })?;
    io::write_json(&dir.join("intrinsics.json"), &simkit::default_intrinsics())?;
    let detections: Vec<TimelineRecord> = data
        .queries
        .iter()
        .map(|q| TimelineRecord::from(&q.timeline))
        .collect();
    io::write_json(&dir.join("detections.json"), &detections)?;
    let poses: BTreeMap<&str, _> = data
        .queries
        .iter()
        .map(|q| (q.gt.query_id.as_str(), io::poses_record(&q.poses)))
        .collect();
    io::write_json(&dir.join("poses.json"), &poses)?;
    let depths: BTreeMap<&str, _> = data
        .queries
        .iter()
        .map(|q| {
            let rec = ScalarDepthRecord {
                mode: "scalar",
                values: q.depths.0.clone(),
            };
            (q.gt.query_id.as_str(), rec)
        })
        .collect();
    io::write_json(&dir.join("depths.json"), &depths)?;
    let gt: Vec<GroundTruthRecord> = data
        .queries
        .iter()
        .map(|q| GroundTruthRecord::from(&q.gt))
        .collect();
    io::write_json(&dir.join("gt.json"), &gt)?;
    Ok(())
}

/// Runs `config` over in-memory simulated queries and scores the result.
pub fn evaluate_simulated(
    data: &SimDataset,
    config: &LocalizeConfig,
    threshold: f64,
) -> Result<EvalReport, CliError> {
    let intr = simkit::default_intrinsics();
    let tasks: Vec<QueryTask<'_>> = data
        .queries
        .iter()
        .map(|q| QueryTask {
            timeline: &q.timeline,
            poses: &q.poses,
            depths: &q.depths,
            intr: &intr,
        })
        .collect();
    let results = localize::localize_batch(&tasks, config).map_err(localize_error)?;
    let gts: Vec<GroundTruth> = data.queries.iter().map(|q| q.gt.clone()).collect();
    Ok(metrics::evaluate(&results, &gts, threshold)?)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = SimConfig {
        scenes: args.scenes,
        queries_per_scene: args.queries,
        seed: args.seed,
        scene: SceneConfig {
            n_objects: args.objects,
            n_frames: args.frames,
            room_extent: args.room_extent,
        },
        noise: NoiseConfig {
            depth_scale_sigma: args.depth_scale_sigma,
            depth_shift_sigma: args.depth_shift_sigma,
            depth_random: args.depth_random,
            pose_dropout: args.pose_dropout,
            score_noise_sigma: args.score_noise_sigma,
            pixel_noise_sigma: args.pixel_noise_sigma,
        },
    };
    config.scene.validate()?;
    config.noise.validate()?;
    let data = simkit::simulate(&config)?;
    write_dataset(&args.out, &config, &data)?;
    println!(
        "wrote {} queries from {} scenes to {}",
        data.queries.len(),
        data.scenes.len(),
        args.out.display()
    );
    if !data.queries.is_empty() {
        let report = evaluate_simulated(&data, &LocalizeConfig::default(), args.threshold)?;
        let o = &report.overall;
        println!(
            "oracle success {:.4} (success* {:.4}, qwp {:.4}) at threshold {} m",
            o.success, o.success_star, o.qwp, args.threshold
        );
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn cmd_ablate(args: &AblateArgs) -> Result<(), CliError> {
    let data = Dataset::from_dir(&args.data)?;
    let gts = io::read_ground_truth(&args.data.join("gt.json"))?;
    let out_dir = args.out.clone().unwrap_or_else(|| args.data.clone());
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", out_dir.display())))?;
    let pool = thread_pool(args.parallelism)?;
    let tasks = data.tasks();
    let base = LocalizeConfig {
        peak_params: args.peaks.params(),
        padding: args.peaks.pad,
        ..LocalizeConfig::default()
    };
    let aggregations = [
        AggregationStrategy::Last,
        AggregationStrategy::Mean,
        AggregationStrategy::Nms {
            radius: args.nms_radius,
        },
        AggregationStrategy::DetWeighted,
    ];

    let mut csv = String::from("response,aggregation,depth_source,success,success_star,qwp,l2_rmse,angle_mean,n_total,n_posed,n_success\n");
    let mut best: Option<(f64, String)> = None;
    for response in ResponseStrategy::ALL {
        for aggregation in aggregations {
            for depth_source in [DepthSource::PerView, DepthSource::Triangulation] {
                let config = LocalizeConfig {
                    response,
                    aggregation,
                    depth_source,
                    ..base
                };
                config
                    .validate()
                    .map_err(|e| CliError::Input(e.to_string()))?;
                let results = run_batch(&pool, &tasks, &config)?;
                let o = metrics::evaluate(&results, &gts, args.threshold)?.overall;
                let name = format!(
                    "{},{},{}",
                    response.name(),
                    aggregation.name(),
                    depth_source.name()
                );
                let _ = writeln!(
                    csv,
                    "{name},{:.6},{:.6},{:.6},{},{},{},{},{}",
                    o.success,
                    o.success_star,
                    o.qwp,
                    fmt_opt(o.l2_rmse),
                    fmt_opt(o.angle_mean),
                    o.n_total,
                    o.n_posed,
                    o.n_success
                );
                if best.as_ref().is_none_or(|(s, _)| o.success > *s) {
                    best = Some((o.success, name));
                }
            }
        }
    }
    io::write_text(&out_dir.join("ablation.csv"), &csv)?;

    let mut sweep = String::from("window_threshold,success,l2_rmse\n");
    for &t in &args.windows {
        let config = LocalizeConfig {
            window_threshold: Some(t),
            ..base
        };
        config
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        let results = run_batch(&pool, &tasks, &config)?;
        let o = metrics::evaluate(&results, &gts, args.threshold)?.overall;
        let _ = writeln!(sweep, "{t},{:.6},{}", o.success, fmt_opt(o.l2_rmse));
    }
    io::write_text(&out_dir.join("window_sweep.csv"), &sweep)?;

    if let Some((success, name)) = best {
        println!("best configuration: {name} (success {success:.4})");
    }
    println!(
        "wrote {} and {}",
        out_dir.join("ablation.csv").display(),
        out_dir.join("window_sweep.csv").display()
    );
    Ok(())
}

fn cmd_align(args: &AlignArgs) -> Result<(), CliError> {
    let anchors: Vec<AnchorRecord> = io::read_json(&args.anchors)?;
    let src: Vec<WorldPoint> = anchors
        .iter()
        .map(|a| WorldPoint::from(a.local_center))
        .collect();
    let dst: Vec<WorldPoint> = anchors
        .iter()
        .map(|a| WorldPoint::from(a.world_center))
        .collect();
    let align_err =
        |e: align::AlignError| CliError::Input(format!("{}: {e}", args.anchors.display()));
    let (transform, inliers): (Sim3, usize) = if args.exact {
        (
            align::estimate_sim3(&src, &dst).map_err(align_err)?,
            src.len(),
        )
    } else {
        let robust =
            align::estimate_sim3_robust(&src, &dst, args.max_error, args.iterations, args.seed)
                .map_err(align_err)?;
        let n = robust.inlier_count();
        for (a, keep) in anchors.iter().zip(&robust.inlier_mask) {
            if !keep {
                info!("anchor at frame {} rejected as an outlier", a.frame);
            }
        }
        (robust.transform, n)
    };
    io::write_json(&args.out, &Sim3Record::from(&transform))?;
    println!(
        "scale {:.6}, {inliers}/{} inlier anchors, wrote {}",
        transform.scale(),
        anchors.len(),
        args.out.display()
    );

    if let (Some(input), Some(output)) = (&args.poses, &args.poses_out) {
        let moved = |poses: &FramePoses| -> FramePoses {
            poses
                .iter()
                .map(|(f, p)| {
                    (
                        *f,
                        p.as_ref().map(|p| align::apply_sim3_pose(&transform, p)),
                    )
                })
                .collect()
        };
        match io::read_poses(input)? {
            PosesInput::Shared(p) => io::write_json(output, &io::poses_record(&moved(&p)))?,
            PosesInput::PerQuery(m) => {
                let out: BTreeMap<&String, _> = m
                    .iter()
                    .map(|(q, p)| (q, io::poses_record(&moved(p))))
                    .collect();
                io::write_json(output, &out)?
            }
        }
    }
    Ok(())
}

fn cmd_peaks(args: &PeaksArgs) -> Result<(), CliError> {
    let params = args.peaks.params();
    params
        .validate()
        .map_err(|e| CliError::Input(e.to_string()))?;
    println!("peak params: {params}, padding {:?}", args.peaks.pad);
    let timelines = io::read_detections(&args.scores)?;
    let selected: Vec<&DetectionTimeline> = match &args.query_id {
        Some(q) => {
            let t: Vec<_> = timelines.iter().filter(|t| t.query_id() == q).collect();
            if t.is_empty() {
                return Err(CliError::Input(format!(
                    "{}: no query {q}",
                    args.scores.display()
                )));
            }
            t
        }
        None => timelines.iter().collect(),
    };
    let mut csv = String::from("query_id,frame,raw,smoothed,is_peak\n");
    for t in selected {
        let set = signal::select_response_peaks(t, &params, args.peaks.pad)
            .map_err(|e| CliError::Input(e.to_string()))?;
        if set.is_empty() {
            println!("{}: no peaks", t.query_id());
        } else {
            let list: Vec<String> = set
                .peaks
                .iter()
                .map(|p| {
                    format!(
                        "frame {} (score {:.3}, prominence {:.3}, width {:.1})",
                        p.frame, p.score, p.prominence, p.width
                    )
                })
                .collect();
            println!(
                "{}: {} peak(s): {}",
                t.query_id(),
                set.len(),
                list.join("; ")
            );
        }
        let raw = t.scores();
        let smoothed = signal::median_filter(&raw, params.median_kernel, args.peaks.pad)
            .unwrap_or_else(|_| raw.clone());
        let peak_frames = set.frames();
        for (i, d) in t.entries().iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                t.query_id(),
                d.frame,
                raw[i],
                smoothed[i],
                u8::from(peak_frames.contains(&d.frame))
            );
        }
    }
    if let Some(out) = &args.out {
        io::write_text(out, &csv)?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Localize(a) => cmd_localize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Align(a) => cmd_align(a),
        Command::Peaks(a) => cmd_peaks(a),
    }
}

/// Binary entry point.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EGOLOC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("egoloc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
