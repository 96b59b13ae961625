//! End-to-end checks of the binary: exit codes, output files, and
//! byte-determinism of generated suites.

use assert_cmd::Command;
use ground3d_core::geometry::write_point_cloud;
use ground3d_core::{Point3, PointCloud};
use predicates::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn ground3d() -> Command {
    Command::cargo_bin("ground3d").unwrap()
}

fn write_scene(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (class, center, n) in [
        ("chair", [0.0, 0.0, 0.4], 120),
        ("chair", [4.0, 0.0, 0.4], 120),
        ("table", [4.5, 1.5, 0.4], 160),
    ] {
        for _ in 0..n {
            points.push(Point3::new(
                center[0] + rng.gen_range(-0.25..0.25),
                center[1] + rng.gen_range(-0.25..0.25),
                center[2] + rng.gen_range(-0.25..0.25),
            ));
            labels.push(class.to_string());
        }
    }
    let cloud = PointCloud::new(points).unwrap().with_labels(labels).unwrap();
    write_point_cloud(path, &cloud).unwrap();
}

#[test]
fn ground_resolver_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.ply");
    write_scene(&scene);
    let out = dir.path().join("result.json");
    ground3d()
        .args(["ground", "--scene"])
        .arg(&scene)
        .args([
            "--query",
            "the chair near the table",
            "--eps",
            "0.3",
            "--min-pts",
            "5",
            "--quantile",
            "0.9",
        ])
        .arg("--out")
        .arg(&out)
        .assert()
        .success()
        .stdout(predicate::str::contains("\"config_digest\""));
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // the chair at x=4 is the one near the table
    let cx = written["chosen"]["centroid"]["x"].as_f64().unwrap();
    assert!(cx > 3.0, "grounded the wrong chair: centroid.x = {cx}");
}

#[test]
fn missing_scene_is_usage_error() {
    ground3d()
        .args([
            "ground",
            "--scene",
            "/nonexistent/scene.ply",
            "--query",
            "a chair",
        ])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("cannot load scene"));
}

#[test]
fn unmatched_query_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.ply");
    write_scene(&scene);
    ground3d()
        .args(["ground", "--strategy", "raw", "--scene"])
        .arg(&scene)
        .args(["--query", "the zeppelin"])
        .assert()
        .code(1)
        .stderr(predicate::str::contains("no candidates"));
}

#[test]
fn bad_flag_is_usage_error() {
    ground3d()
        .args(["ground", "--no-such-flag"])
        .assert()
        .code(2);
}

#[test]
fn bad_config_file_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.ply");
    write_scene(&scene);
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"unknown_setting": 1}"#).unwrap();
    ground3d()
        .args(["ground", "--scene"])
        .arg(&scene)
        .args(["--query", "a chair", "--config"])
        .arg(&config)
        .assert()
        .code(2)
        .stderr(predicate::str::contains("bad config"));
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(next) = stack.pop() {
        for entry in std::fs::read_dir(&next).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ground3d()
            .args(["synth", "--seed", "9", "--scenes", "5", "--distractors", "2", "--out"])
            .arg(out)
            .assert()
            .success()
            .stdout(predicate::str::contains("seed=9"));
    }
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    assert_eq!(ta.len(), 7); // 5 scenes + annotations + ground truth
    assert_eq!(ta, tb, "same seed produced different bytes");
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    ground3d()
        .args(["synth", "--seed", "4", "--scenes", "6", "--distractors", "2", "--out"])
        .arg(&suite)
        .assert()
        .success();
    let reports = dir.path().join("reports");
    ground3d()
        .args(["bench", "--seed", "4", "--quantile", "0.995", "--eps", "0.3", "--min-pts", "5"])
        .arg("--scenes")
        .arg(suite.join("scenes"))
        .arg("--annotations")
        .arg(suite.join("annotations.json"))
        .arg("--ground-truth")
        .arg(suite.join("ground_truth.json"))
        .arg("--out")
        .arg(&reports)
        .assert()
        .success()
        .stdout(predicate::str::contains("resolver"));
    for file in ["accuracy.tsv", "complexity.tsv", "summary.json"] {
        let text = std::fs::read_to_string(reports.join(file)).unwrap();
        if file.ends_with(".tsv") {
            assert!(text.starts_with("# seed=4 config="), "{file} missing header");
        }
    }
}

#[test]
fn cache_verbs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    std::fs::create_dir_all(&cache).unwrap();
    ground3d()
        .args(["cache", "stats", "--cache-dir"])
        .arg(&cache)
        .assert()
        .success()
        .stdout(predicate::str::contains("0 cached responses"));
    let bundle = dir.path().join("bundle.json");
    ground3d()
        .args(["cache", "export", "--out"])
        .arg(&bundle)
        .arg("--cache-dir")
        .arg(&cache)
        .assert()
        .success();
    ground3d()
        .args(["cache", "import", "--bundle"])
        .arg(&bundle)
        .arg("--cache-dir")
        .arg(&cache)
        .assert()
        .success();
    ground3d()
        .args(["cache", "clear", "--cache-dir"])
        .arg(&cache)
        .assert()
        .success()
        .stdout(predicate::str::contains("removed 0"));
}
