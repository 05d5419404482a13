//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use egoloc::align::{estimate_sim3, estimate_sim3_robust, rotation_angle_between, Sim3};
use egoloc::camera::{self, axis_angle, CameraIntrinsics, Pose, WorldPoint};
use egoloc::cli::evaluate_simulated;
use egoloc::localize::{
    localize_batch, triangulate, AggregationStrategy, DepthSource, LocalizationResult,
    LocalizeConfig, QueryStatus, QueryTask, RayObservation, ResponseStrategy,
};
use egoloc::metrics::{self, l2_error, GroundTruth};
use egoloc::signal::PeakParams;
use egoloc::simkit::{self, NoiseConfig, SceneConfig, SimConfig, SimDataset};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

const SUCCESS_THRESHOLD: f64 = 0.5;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let r = axis_angle(&unit_vector(rng), rng.random_range(-3.0..3.0));
    let t = Vector3::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
    );
    Pose::new(r, t).unwrap()
}

/// Camera point at off-axis angle `< max_theta`.
fn random_cam_point(rng: &mut ChaCha8Rng, max_theta: f64) -> Vector3<f64> {
    let theta = rng.random_range(0.0..max_theta);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let z = rng.random_range(0.5..20.0);
    let r = z * theta.tan();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fisheye =
        CameraIntrinsics::radial_fisheye(280.0, 320.0, 240.0, 0.02, 0.005, 640, 480).unwrap();
    let pinhole = CameraIntrinsics::pinhole(500.0, 480.0, 320.0, 240.0, 640, 480).unwrap();
    let mut worst = [0.0f64; 2];
    for (slot, intr, max_theta) in [(0, &fisheye, 1.2), (1, &pinhole, 1.0)] {
        for _ in 0..1000 {
            let p = random_cam_point(&mut rng, max_theta);
            let px = camera::project(&p, intr).map_err(|e| e.to_string())?;
            let ray = camera::undistort_to_ray(&px, intr).map_err(|e| e.to_string())?;
            let ray_err = (ray.x - p.x / p.z).abs().max((ray.y - p.y / p.z).abs());
            let pose = random_pose(&mut rng);
            let wp = camera::unproject(&px, p.z, intr, &pose).map_err(|e| e.to_string())?;
            let back = camera::project(&pose.world_to_cam(&wp), intr).map_err(|e| e.to_string())?;
            let px_err = (back.u - px.u).abs().max((back.v - px.v).abs());
            worst[slot] = worst[slot].max(ray_err).max(px_err);
        }
    }
    ensure(worst[0] < 1e-8, || {
        format!("fisheye sup error {:.2e}", worst[0])
    })?;
    ensure(worst[1] < 1e-10, || {
        format!("pinhole sup error {:.2e}", worst[1])
    })?;
    Ok(format!(
        "sup error fisheye {:.1e}, pinhole {:.1e} over 1000 cases each",
        worst[0], worst[1]
    ))
}

fn random_sim3(rng: &mut ChaCha8Rng) -> Sim3 {
    Sim3::new(
        rng.random_range(0.2..5.0),
        axis_angle(&unit_vector(rng), rng.random_range(-3.0..3.0)),
        Vector3::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        ),
    )
    .unwrap()
}

fn criterion_2() -> Check {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_sim3(&mut rng);
        let n = rng.random_range(10..30);
        let src: Vec<WorldPoint> = (0..n)
            .map(|_| {
                WorldPoint::from(Vector3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                ))
            })
            .collect();
        let dst: Vec<WorldPoint> = src.iter().map(|p| truth.apply(p)).collect();
        let est = estimate_sim3(&src, &dst).map_err(|e| e.to_string())?;
        worst.0 = worst
            .0
            .max(rotation_angle_between(est.rotation(), truth.rotation()));
        worst.1 = worst
            .1
            .max((est.scale() - truth.scale()).abs() / truth.scale());
        worst.2 = worst
            .2
            .max((est.translation() - truth.translation()).norm());
    }
    ensure(worst.0 < 1e-9 && worst.1 < 1e-9 && worst.2 < 1e-9, || {
        format!(
            "rotation {:.1e} rad, scale {:.1e}, translation {:.1e} m",
            worst.0, worst.1, worst.2
        )
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for trial in 0..20 {
        let truth = random_sim3(&mut rng);
        let n = 20;
        let src: Vec<WorldPoint> = (0..n)
            .map(|_| {
                WorldPoint::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                )
            })
            .collect();
        let mut dst: Vec<WorldPoint> = src.iter().map(|p| truth.apply(p)).collect();
        let mut expected = vec![true; n];
        for i in rand::seq::index::sample(&mut rng, n, 6) {
            dst[i] += unit_vector(&mut rng) * rng.random_range(3.0..20.0);
            expected[i] = false;
        }
        let robust =
            estimate_sim3_robust(&src, &dst, 0.25, 1000, trial).map_err(|e| e.to_string())?;
        ensure(robust.inlier_mask == expected, || {
            format!("trial {trial}: inlier mask mismatch")
        })?;
        let rot = rotation_angle_between(robust.transform.rotation(), truth.rotation());
        ensure(rot < 1e-9, || {
            format!("trial {trial}: robust rotation error {rot:.1e}")
        })?;
    }
    Ok(format!(
        "worst rotation {:.1e} rad, scale {:.1e}, translation {:.1e} m over 100 seeds; 20/20 exact masks at 30% outliers",
        worst.0, worst.1, worst.2
    ))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total_peaks = 0;
    for case in 0..1000 {
        let len = rng.random_range(3..=50);
        let quantized = case % 2 == 0;
        let x: Vec<f64> = (0..len)
            .map(|_| {
                if quantized {
                    rng.random_range(0..5) as f64 / 4.0
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let p = PeakParams {
            median_kernel: 1,
            distance: rng.random_range(1..12),
            width: rng.random_range(0.0..4.0),
            prominence: rng.random_range(0.0..0.6),
            wlen: rng.random_range(2..60),
            rel_height: rng.random_range(0.05..=1.0),
        };
        common::check_against_oracle(&x, &p).map_err(|e| format!("case {case}: {e}"))?;
        total_peaks += common::oracle_find_peaks(&x, &p).len();
    }
    Ok(format!(
        "1000 sequences agree with the brute-force oracle ({total_peaks} peaks)"
    ))
}

/// Camera at `center` looking at `target`.
fn look_at(center: Vector3<f64>, target: &WorldPoint) -> Pose {
    let fwd = (target.coords - center).normalize();
    let helper = if fwd.z.abs() < 0.9 {
        Vector3::z()
    } else {
        Vector3::x()
    };
    let right = fwd.cross(&helper).normalize();
    let down = fwd.cross(&right);
    Pose::new(nalgebra::Matrix3::from_columns(&[right, down, fwd]), center).unwrap()
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let intr =
        CameraIntrinsics::radial_fisheye(280.0, 320.0, 240.0, 0.02, 0.005, 640, 480).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x = WorldPoint::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.0..2.0),
        );
        let n = rng.random_range(2..=8);
        let rays: Vec<RayObservation> = (0..n)
            .map(|_| {
                let center = x.coords - unit_vector(&mut rng) * rng.random_range(1.0..6.0);
                // Off-center aim so the pixels exercise the distortion.
                let aim = WorldPoint::from(x.coords + unit_vector(&mut rng) * 0.5);
                let pose = look_at(center, &aim);
                let pixel = camera::project(&pose.world_to_cam(&x), &intr).unwrap();
                RayObservation { pose, pixel }
            })
            .collect();
        let t = triangulate(&rays, &intr, 1f64.to_radians()).map_err(|e| e.to_string())?;
        worst = worst.max((t.point - x).norm());
    }
    ensure(worst < 1e-6, || format!("noiseless error {worst:.2e} m"))?;

    let mut flagged = 0;
    for case in 0..500 {
        let angle = loop {
            let a: f64 = rng.random_range(0.05f64..2.0);
            if (a - 1.0).abs() > 1e-3 {
                break a.to_radians();
            }
        };
        let x = WorldPoint::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.0..2.0),
        );
        let u1 = unit_vector(&mut rng);
        let axis = u1.cross(&unit_vector(&mut rng)).normalize();
        let u2 = axis_angle(&axis, angle) * u1;
        let rays: Vec<RayObservation> = [u1, u2]
            .iter()
            .map(|u| {
                let pose = look_at(x.coords - u * rng.random_range(2.0..8.0), &x);
                let pixel = camera::project(&pose.world_to_cam(&x), &intr).unwrap();
                RayObservation { pose, pixel }
            })
            .collect();
        let t = triangulate(&rays, &intr, 1f64.to_radians()).map_err(|e| e.to_string())?;
        let expected = angle < 1f64.to_radians();
        ensure(t.degenerate_baseline == expected, || {
            format!(
                "case {case}: ray angle {:.4}° flagged {}",
                angle.to_degrees(),
                t.degenerate_baseline
            )
        })?;
        flagged += usize::from(expected);
    }
    Ok(format!("noiseless error {worst:.1e} m over 200 instances; baseline flag exact on 500 pairs ({flagged} degenerate)"))
}

fn sim(scenes: usize, queries: usize, seed: u64, noise: NoiseConfig) -> Result<SimDataset, String> {
    simkit::simulate(&SimConfig {
        scenes,
        queries_per_scene: queries,
        seed,
        scene: SceneConfig::default(),
        noise,
    })
    .map_err(|e| e.to_string())
}

fn config(response: ResponseStrategy, aggregation: AggregationStrategy) -> LocalizeConfig {
    LocalizeConfig {
        response,
        aggregation,
        ..LocalizeConfig::default()
    }
}

fn run(data: &SimDataset, config: &LocalizeConfig) -> Result<Vec<LocalizationResult>, String> {
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
    localize_batch(&tasks, config).map_err(|(q, e)| format!("{q}: {e}"))
}

/// Per-query L2 errors of Ok results, in query order.
fn l2_errors(data: &SimDataset, results: &[LocalizationResult]) -> Vec<f64> {
    let gts: std::collections::BTreeMap<&str, &GroundTruth> = data
        .queries
        .iter()
        .map(|q| (q.gt.query_id.as_str(), &q.gt))
        .collect();
    results
        .iter()
        .filter(|r| r.status == QueryStatus::Ok)
        .map(|r| {
            l2_error(
                &r.displacement_vec().unwrap(),
                &gts[r.query_id.as_str()].displacement().unwrap(),
            )
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

const AGGREGATIONS: [AggregationStrategy; 4] = [
    AggregationStrategy::Last,
    AggregationStrategy::Mean,
    AggregationStrategy::Nms { radius: 1.0 },
    AggregationStrategy::DetWeighted,
];

fn criterion_5() -> Check {
    let data = sim(10, 20, 5, NoiseConfig::default())?;
    let mut worst = (0.0f64, 0.0f64);
    for response in ResponseStrategy::ALL {
        for aggregation in AGGREGATIONS {
            let c = LocalizeConfig {
                depth_source: DepthSource::PerView,
                ..config(response, aggregation)
            };
            let r = evaluate_simulated(&data, &c, SUCCESS_THRESHOLD)
                .map_err(|e| e.to_string())?
                .overall;
            let tag = format!("{}/{}", response.name(), aggregation.name());
            ensure(r.n_total == 200, || format!("{tag}: {} queries", r.n_total))?;
            ensure(
                r.success == 1.0 && r.success_star == 1.0 && r.qwp == 1.0,
                || {
                    format!(
                        "{tag}: success {} success* {} qwp {}",
                        r.success, r.success_star, r.qwp
                    )
                },
            )?;
            let (l2, angle) = (r.l2_rmse.unwrap(), r.angle_mean.unwrap());
            ensure(l2 < 1e-6 && angle < 1e-6, || {
                format!("{tag}: L2 {l2:.2e} angle {angle:.2e}")
            })?;
            worst = (worst.0.max(l2), worst.1.max(angle));
        }
    }
    Ok(format!(
        "200 queries x 16 per-view configs at 100%; worst L2 {:.1e} m, angle {:.1e} rad",
        worst.0, worst.1
    ))
}

fn criterion_6() -> Check {
    let data = sim(
        50,
        20,
        6,
        NoiseConfig {
            pose_dropout: 0.2,
            ..Default::default()
        },
    )?;
    let r = evaluate_simulated(&data, &LocalizeConfig::default(), SUCCESS_THRESHOLD)
        .map_err(|e| e.to_string())?
        .overall;
    ensure(r.n_total == 1000, || format!("{} queries", r.n_total))?;
    ensure((r.qwp - 0.8).abs() < 0.04, || format!("qwp {:.4}", r.qwp))?;
    let product = r.success_star * r.qwp;
    ensure(
        (r.success - product).abs() <= f64::EPSILON * r.success.max(f64::MIN_POSITIVE),
        || format!("success {} != success* x qwp {}", r.success, product),
    )?;
    ensure(r.n_success as f64 / r.n_total as f64 == r.success, || {
        "success is not n_success / n_total".into()
    })?;
    Ok(format!(
        "qwp {:.4} over 1000 queries, success {:.4} = success* {:.4} x qwp",
        r.qwp, r.success, r.success_star
    ))
}

fn depth_noise() -> NoiseConfig {
    NoiseConfig {
        depth_scale_sigma: 0.2,
        depth_shift_sigma: 0.2,
        pixel_noise_sigma: 2.0,
        ..Default::default()
    }
}

fn criterion_7() -> Check {
    let mut pooled = [Vec::new(), Vec::new(), Vec::new()];
    let mut wins = 0;
    let seeds = 20u64;
    for seed in 0..seeds {
        let data = sim(10, 20, 700 + seed, depth_noise())?;
        for (slot, agg) in [
            AggregationStrategy::DetWeighted,
            AggregationStrategy::Mean,
            AggregationStrategy::Last,
        ]
        .into_iter()
        .enumerate()
        {
            let results = run(&data, &config(ResponseStrategy::DetPeaks, agg))?;
            pooled[slot].extend(l2_errors(&data, &results));
        }
        let success = |response| -> Result<f64, String> {
            let c = config(response, AggregationStrategy::DetWeighted);
            Ok(evaluate_simulated(&data, &c, SUCCESS_THRESHOLD)
                .map_err(|e| e.to_string())?
                .overall
                .success)
        };
        if success(ResponseStrategy::DetPeaks)? >= success(ResponseStrategy::LastDetPeak)? {
            wins += 1;
        }
    }
    let [w, m, l] = [mean(&pooled[0]), mean(&pooled[1]), mean(&pooled[2])];
    let summary = format!(
        "mean L2 det-weighted {w:.4} <= mean {m:.4} <= last {l:.4}; det-peaks >= last-det-peak in {wins}/{seeds} seeds"
    );
    ensure(w <= m && m <= l, || format!("ordering violated: {summary}"))?;
    ensure(wins as f64 >= 0.6 * seeds as f64, || {
        format!("too few wins: {summary}")
    })?;
    Ok(summary)
}

fn criterion_8() -> Check {
    let clean = sim(10, 20, 8, NoiseConfig::default())?;
    let gauss = sim(
        10,
        20,
        8,
        NoiseConfig {
            depth_scale_sigma: 0.2,
            depth_shift_sigma: 0.2,
            ..Default::default()
        },
    )?;
    let random = sim(
        10,
        20,
        8,
        NoiseConfig {
            depth_random: Some((0.1, 10.0)),
            ..Default::default()
        },
    )?;
    let c = LocalizeConfig::default();
    let e: Vec<Vec<f64>> = [&clean, &gauss, &random]
        .iter()
        .map(|d| run(d, &c).map(|r| l2_errors(d, &r)))
        .collect::<Result<_, _>>()?;
    ensure(e.iter().all(|v| v.len() == 200), || {
        "every query must be posed".into()
    })?;
    // Same scenes and queries in all three runs, so the gaps are paired.
    let gap = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let m = mean(&d);
        let var = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        (m, (var / d.len() as f64).sqrt())
    };
    let (g1, se1) = gap(&e[0], &e[1]);
    let (g2, se2) = gap(&e[1], &e[2]);
    let summary = format!(
        "mean L2 clean {:.4} < noise {:.4} (gap {:.1} SE) < random {:.4} (gap {:.1} SE)",
        mean(&e[0]),
        mean(&e[1]),
        g1 / se1,
        mean(&e[2]),
        g2 / se2
    );
    ensure(g1 > 3.0 * se1 && g2 > 3.0 * se2, || summary.clone())?;
    Ok(summary)
}

fn criterion_9() -> Check {
    let gt = |id: &str, scene: &str| GroundTruth {
        query_id: id.into(),
        scene_id: scene.into(),
        object_world: WorldPoint::new(1.0, 0.0, 0.0),
        query_pose: Some(Pose::identity()),
    };
    let ok = |id: &str, d: [f64; 3]| LocalizationResult {
        query_id: id.into(),
        status: QueryStatus::Ok,
        world_point: Some(d),
        displacement: Some(d),
    };
    let results = vec![
        ok("a", [1.1, 0.0, 0.0]),
        ok("b", [11.0, 0.0, 0.0]),
        LocalizationResult {
            query_id: "c".into(),
            status: QueryStatus::NoQueryPose,
            world_point: None,
            displacement: None,
        },
    ];
    let report = metrics::evaluate(
        &results,
        &[gt("a", "s1"), gt("b", "s1"), gt("c", "s2")],
        1.0,
    )
    .map_err(|e| e.to_string())?;
    let o = &report.overall;
    ensure(
        o.qwp == 2.0 / 3.0 && o.success == 1.0 / 3.0 && o.success_star == 0.5,
        || {
            format!(
                "qwp {} success {} success* {}",
                o.qwp, o.success, o.success_star
            )
        },
    )?;
    let table = metrics::format_table(&report, true);
    let header: Vec<&str> = table
        .lines()
        .next()
        .unwrap()
        .split('|')
        .map(str::trim)
        .collect();
    ensure(
        header == ["", "Succ%", "Succ*%", "L2", "Angle", "QwP%"],
        || format!("header {header:?}"),
    )?;
    let row: Vec<&str> = table
        .lines()
        .nth(2)
        .unwrap()
        .split('|')
        .map(str::trim)
        .collect();
    ensure(
        row == ["overall", "33.33", "50.00", "7.07", "0.00", "66.67"],
        || format!("row {row:?}"),
    )?;
    Ok("qwp 2/3, success 1/3, success* 1/2; table columns Succ% Succ*% L2 Angle QwP%".into())
}

fn read_tree(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let p = e.map_err(|e| e.to_string())?.path();
            let bytes = std::fs::read(&p).map_err(|e| e.to_string())?;
            Ok((p.file_name().unwrap().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn criterion_10() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_egoloc"))
            .args([
                "simulate",
                "--scenes",
                "3",
                "--queries",
                "5",
                "--seed",
                "42",
                "--pose-dropout",
                "0.1",
            ])
            .args([
                "--depth-scale-sigma",
                "0.2",
                "--depth-shift-sigma",
                "0.2",
                "--pixel-noise-sigma",
                "2",
                "--out",
            ])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            String::from_utf8_lossy(&status.stderr).into_owned()
        })?;
        trees.push(read_tree(&out)?);
    }
    ensure(!trees[0].is_empty() && trees[0] == trees[1], || {
        "directories differ".into()
    })?;
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!(
        "{} files, {bytes} bytes, byte-identical across runs",
        trees[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("geometry round trips", Duration::from_secs(1), criterion_1),
        ("Umeyama recovery", Duration::from_secs(5), criterion_2),
        (
            "peak detector vs oracle",
            Duration::from_secs(10),
            criterion_3,
        ),
        ("triangulation", Duration::from_secs(1), criterion_4),
        (
            "end-to-end zero noise",
            Duration::from_secs(30),
            criterion_5,
        ),
        ("QwP accounting", Duration::from_secs(60), criterion_6),
        (
            "aggregation and response ordering",
            Duration::from_secs(300),
            criterion_7,
        ),
        (
            "depth robustness ordering",
            Duration::from_secs(120),
            criterion_8,
        ),
        ("metrics fixture", Duration::from_secs(1), criterion_9),
        (
            "simulate determinism",
            Duration::from_secs(60),
            criterion_10,
        ),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let over = elapsed > *budget;
        let (tag, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; runtime over the {budget:?} budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {:>2} {tag} [{:>8.3}s] {name}: {detail}",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
