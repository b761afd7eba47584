use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rcesdf::distance_field::{ScalarField2D, SignConvention};
use rcesdf::pipeline::PlannerConfig;
use rcesdf::rc_esdf::SE2Pose;
use rcesdf::scene::{MapSpec, RobotShape, Scenario};
use rcesdf::scenarios::{fill_rect, walled_grid};
use rcesdf::Vec2;
use tempfile::TempDir;

fn rcplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcplan")).args(args).output().expect("binary runs")
}

fn small_scenario(dir: &Path) -> PathBuf {
    let mut g = walled_grid(8.0, 5.0);
    fill_rect(&mut g, 3.8, 0.0, 4.2, 2.4);
    let sc = Scenario::new(
        RobotShape::rectangle(0.8, 0.4).unwrap(),
        MapSpec::Grid(g),
        SE2Pose::new(Vec2::new(1.5, 1.5), 0.0),
        SE2Pose::new(Vec2::new(6.5, 1.5), 0.0),
        PlannerConfig::default(),
        None,
    )
    .unwrap();
    let path = dir.join("small.json");
    fs::write(&path, sc.to_json()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn plan_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let sc = small_scenario(tmp.path());
    let out = tmp.path().join("out");
    let o = rcplan(&["plan", s(&sc), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    for f in ["trajectory.csv", "control_points.json", "result.json", "plot.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let result = json(&out.join("result.json"));
    assert_eq!(result["validation"]["collision_free"], true);
    assert!(result.get("trace").is_none());
    assert!(fs::read_to_string(out.join("plot.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn plan_trace_flag() {
    let tmp = TempDir::new().unwrap();
    let sc = small_scenario(tmp.path());
    let out = tmp.path().join("out");
    let o = rcplan(&["plan", s(&sc), "-o", s(&out), "--trace", "--no-plot"]);
    assert_eq!(o.status.code(), Some(0));
    let result = json(&out.join("result.json"));
    let trace = result["trace"].as_array().expect("trace present");
    let iters = result["report"]["iterations"].as_u64().unwrap() as usize;
    assert_eq!(trace.len(), iters + 1);
    assert!(!out.join("plot.svg").exists());
}

#[test]
fn missing_scenario_is_io_error() {
    let o = rcplan(&["plan", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/scenario.json"));
}

#[test]
fn unplannable_scenario_reports_json_error() {
    let tmp = TempDir::new().unwrap();
    // Wall across the whole map.
    let mut g = walled_grid(8.0, 5.0);
    fill_rect(&mut g, 3.8, 0.0, 4.2, 5.0);
    let sc = Scenario::new(
        RobotShape::rectangle(0.8, 0.4).unwrap(),
        MapSpec::Grid(g),
        SE2Pose::new(Vec2::new(1.5, 2.5), 0.0),
        SE2Pose::new(Vec2::new(6.5, 2.5), 0.0),
        PlannerConfig::default(),
        None,
    )
    .unwrap();
    let path = tmp.path().join("blocked.json");
    fs::write(&path, sc.to_json()).unwrap();
    let out = tmp.path().join("out");
    let o = rcplan(&["plan", s(&path), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(err["error"], "no_path");
    assert!(out.join("error.json").is_file());
}

#[test]
fn benchmark_records_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let sc = small_scenario(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = rcplan(&["benchmark", s(&sc), "--reps", "1", "--seed", "7", "--omit-timings", "-o", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("per-iter"));
    }
    let bytes = fs::read(a.join("benchmark.json")).unwrap();
    assert_eq!(bytes, fs::read(b.join("benchmark.json")).unwrap());
    let records: Vec<serde_json::Value> = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["method"], "rc");
    assert_eq!(records[1]["method"], "wbfp");
    assert!(records[0]["total_opt_time"].is_null());
}

#[test]
fn benchmark_per_iteration_time() {
    let tmp = TempDir::new().unwrap();
    let sc = small_scenario(tmp.path());
    let out = tmp.path().join("out");
    let o = rcplan(&["benchmark", s(&sc), "--reps", "1", "--methods", "rc", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let records: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(out.join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    let total = r["total_opt_time"].as_f64().unwrap();
    let iters = r["iterations"].as_f64().unwrap();
    assert!((r["per_iteration_time"].as_f64().unwrap() - total / iters.max(1.0)).abs() <= 1e-15);
}

#[test]
fn field_dumps_reload() {
    let tmp = TempDir::new().unwrap();
    let sc = small_scenario(tmp.path());
    for (which, conv) in [
        ("rc", SignConvention::InsideNegativeOutsideZero),
        ("env", SignConvention::InsideNegativeOutsidePositive),
    ] {
        let out = tmp.path().join(which);
        let o = rcplan(&["field", s(&sc), "--which", which, "-o", s(&out)]);
        assert_eq!(o.status.code(), Some(0));
        let text = fs::read_to_string(out.join("field.txt")).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.contains(&format!("{conv:?}")), "{header}");
        let (field, c) = ScalarField2D::from_dump(BufReader::new(text.as_bytes())).unwrap();
        assert_eq!(c, conv);
        assert_eq!(field.to_dump(c), text);
        assert!(out.join("field.svg").is_file());
    }
}

#[test]
fn validate_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let sc = small_scenario(tmp.path());
    let out = tmp.path().join("out");
    assert_eq!(rcplan(&["plan", s(&sc), "-o", s(&out), "--no-plot"]).status.code(), Some(0));
    let csv = out.join("trajectory.csv");

    let ok = rcplan(&["validate", s(&csv), s(&sc)]);
    assert_eq!(ok.status.code(), Some(0));
    let coarse: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(coarse["collision_free"], true);

    let fine = rcplan(&["validate", s(&csv), s(&sc), "--density", "0.02"]);
    let fine: serde_json::Value = serde_json::from_slice(&fine.stdout).unwrap();
    let c = coarse["min_clearance"].as_f64().unwrap();
    let f = fine["min_clearance"].as_f64().unwrap();
    assert!(f <= c + 1e-12, "{f} > {c}");

    // Shift every sample 1 m down so the crossing runs through the wall.
    let text = fs::read_to_string(&csv).unwrap();
    let shifted: String = text
        .lines()
        .map(|l| {
            let mut cols: Vec<String> = l.split(',').map(str::to_string).collect();
            if let Ok(y) = cols[2].parse::<f64>() {
                cols[2] = format!("{}", y - 1.0);
            }
            cols.join(",") + "\n"
        })
        .collect();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, shifted).unwrap();
    let o = rcplan(&["validate", s(&bad), s(&sc)]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["collision_free"], false);
}

#[test]
fn validate_missing_trajectory() {
    let tmp = TempDir::new().unwrap();
    let sc = small_scenario(tmp.path());
    let o = rcplan(&["validate", "/nonexistent/t.csv", s(&sc)]);
    assert_eq!(o.status.code(), Some(2));
}
