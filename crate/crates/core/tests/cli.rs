use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn egoloc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egoloc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn simulated(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "simulate",
        "--scenes",
        "2",
        "--queries",
        "5",
        "--seed",
        "7",
        "--out",
        "data",
    ];
    args.extend_from_slice(extra);
    let o = egoloc(&args, dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn localize(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "localize",
        "--detections",
        "data/detections.json",
        "--poses",
        "data/poses.json",
        "--intrinsics",
        "data/intrinsics.json",
        "--depths",
        "data/depths.json",
        "--out",
        "pred.json",
    ];
    args.extend_from_slice(extra);
    egoloc(&args, dir)
}

#[test]
fn simulate_localize_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulated(dir, &[]);
    for f in [
        "scene.json",
        "intrinsics.json",
        "detections.json",
        "poses.json",
        "depths.json",
        "gt.json",
    ] {
        assert!(dir.join("data").join(f).is_file(), "missing {f}");
    }
    let o = localize(dir, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pred: Value =
        serde_json::from_slice(&std::fs::read(dir.join("pred.json")).unwrap()).unwrap();
    let pred = pred.as_array().unwrap();
    assert_eq!(pred.len(), 10);
    assert!(pred.iter().all(|r| r["status"] == "Ok"));

    let o = egoloc(
        &[
            "evaluate",
            "--pred",
            "pred.json",
            "--gt",
            "data/gt.json",
            "--threshold",
            "0.5",
            "--per-scene",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("Succ%") && out.contains("QwP%"));
    assert!(out
        .lines()
        .any(|l| l.starts_with("overall") && l.contains("100.00")));
    assert!(out.lines().any(|l| l.starts_with("scene000")));
    assert!(out.lines().any(|l| l.starts_with("scene001")));
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["qwp"], 1.0);
    assert_eq!(report["per_scene"].as_object().unwrap().len(), 2);
}

#[test]
fn strategy_flags_are_honoured() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulated(dir, &[]);
    for strategy in ["last", "mean", "nms", "det-weighted"] {
        for response in ["last-track", "last-det-peak", "top-det-peak", "det-peaks"] {
            let o = localize(
                dir,
                &[
                    "--strategy",
                    strategy,
                    "--response",
                    response,
                    "--window-threshold",
                    "0.9",
                ],
            );
            assert!(
                o.status.success(),
                "{strategy}/{response}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
    }
    let o = localize(dir, &["--strategy", "median"]);
    assert_eq!(o.status.code(), Some(2));
    let o = localize(dir, &["--depth-source", "triangulation"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn dropout_shows_up_as_failed_statuses() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulated(dir, &["--pose-dropout", "1"]);
    assert!(localize(dir, &[]).status.success());
    let pred: Value =
        serde_json::from_slice(&std::fs::read(dir.join("pred.json")).unwrap()).unwrap();
    assert!(pred
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["status"] != "Ok" && r.get("displacement").is_none()));
    let o = egoloc(
        &[
            "evaluate",
            "--pred",
            "pred.json",
            "--gt",
            "data/gt.json",
            "--threshold",
            "0.5",
        ],
        dir,
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("n/a"));
}

#[test]
fn input_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulated(dir, &[]);
    std::fs::remove_file(dir.join("data/poses.json")).unwrap();
    let o = localize(dir, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("poses.json"));

    write(&dir.join("empty.json"), &json!([]));
    let o = egoloc(
        &[
            "evaluate",
            "--pred",
            "empty.json",
            "--gt",
            "data/gt.json",
            "--threshold",
            "0.5",
        ],
        dir,
    );
    assert_eq!(o.status.code(), Some(2));

    write(
        &dir.join("bad.json"),
        &json!([{"query_id": "q", "query_frame": 3, "entries": [{"frame": 0, "bbox": [0, 0, 1], "score": 0.5}]}]),
    );
    let o = egoloc(&["peaks", "--scores", "bad.json"], dir);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));
}

fn timeline(scores: &[f64]) -> Value {
    let entries: Vec<Value> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| json!({"frame": i, "bbox": [10.0, 10.0, 4.0, 4.0], "score": s}))
        .collect();
    json!({"query_id": "q1", "query_frame": scores.len(), "entries": entries})
}

#[test]
fn peaks_reports_detected_responses() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(&dir.join("flat.json"), &timeline(&[0.3; 60]));
    let o = egoloc(&["peaks", "--scores", "flat.json"], dir);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("q1: no peaks"));
    assert!(
        out.contains("median_kernel=5 distance=25 width=3 prominence=0.2 wlen=50 rel_height=0.5")
    );

    let bump: Vec<f64> = (0..60)
        .map(|i: i32| (0.9 - 0.05 * (i - 30).abs() as f64).max(0.05))
        .collect();
    write(&dir.join("bump.json"), &timeline(&bump));
    let o = egoloc(
        &["peaks", "--scores", "bump.json", "--out", "plot.csv"],
        dir,
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("q1: 1 peak(s): frame 30"));
    let csv = std::fs::read_to_string(dir.join("plot.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("query_id,frame,raw,smoothed,is_peak")
    );
    assert_eq!(csv.lines().count(), 61);
    assert_eq!(csv.lines().filter(|l| l.ends_with(",1")).count(), 1);

    let o = egoloc(
        &["peaks", "--scores", "bump.json", "--query-id", "nope"],
        dir,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn align_rejects_outlier_anchors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // world = 2 · Rz(90°) · local + (1, 2, 3)
    let anchors: Vec<Value> = (0..10)
        .map(|i| {
            let (x, y, z) = (i as f64, (i * i % 7) as f64, (i % 3) as f64);
            let mut world = [1.0 - 2.0 * y, 2.0 + 2.0 * x, 3.0 + 2.0 * z];
            if i == 4 || i == 8 {
                world[2] += 50.0;
            }
            json!({"frame": i, "local_center": [x, y, z], "world_center": world})
        })
        .collect();
    write(&dir.join("anchors.json"), &Value::Array(anchors));
    write(
        &dir.join("poses.json"),
        &json!({"0": [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1], "1": null}),
    );
    let o = egoloc(
        &[
            "align",
            "--anchors",
            "anchors.json",
            "--out",
            "sim3.json",
            "--poses",
            "poses.json",
            "--poses-out",
            "moved.json",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("8/10 inlier anchors"));
    let sim3: Value =
        serde_json::from_slice(&std::fs::read(dir.join("sim3.json")).unwrap()).unwrap();
    assert!((sim3["scale"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    let t: Vec<f64> = sim3["translation"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((t[0] - 1.0).abs() < 1e-9 && (t[1] - 2.0).abs() < 1e-9 && (t[2] - 3.0).abs() < 1e-9);
    let moved: Value =
        serde_json::from_slice(&std::fs::read(dir.join("moved.json")).unwrap()).unwrap();
    assert!(moved["1"].is_null());
    let m: Vec<f64> = moved["0"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((m[3] - 1.0).abs() < 1e-9 && (m[7] - 2.0).abs() < 1e-9 && (m[11] - 3.0).abs() < 1e-9);

    let o = egoloc(
        &[
            "align",
            "--anchors",
            "anchors.json",
            "--out",
            "exact.json",
            "--exact",
        ],
        dir,
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("10/10"));
}

#[test]
fn ablate_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulated(dir, &[]);
    let o = egoloc(
        &[
            "ablate",
            "--data",
            "data",
            "--threshold",
            "0.5",
            "--out",
            "abl",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.join("abl/ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 32);
    let sweep = std::fs::read_to_string(dir.join("abl/window_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 4);
}
