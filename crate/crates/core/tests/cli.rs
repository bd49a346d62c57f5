use std::path::Path;
use std::process::{Command, Output};

use boxkit::anchors::{generate_anchors, AnchorLevelConfig};

fn boxkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxkit"))
        .args(args)
        .env("BOXKIT_THREADS", "2")
        .output()
        .expect("spawn boxkit")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const THREE_BOXES: &str = r#"{"id": 0, "x1": 0, "y1": 0, "x2": 10, "y2": 10, "score": 0.9}
{"id": 1, "x1": 0, "y1": 0, "x2": 10, "y2": 8, "score": 0.7}
{"id": 2, "x1": 50, "y1": 50, "x2": 60, "y2": 60, "score": 0.6}
"#;

#[test]
fn nms_cosine_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "dets.jsonl", THREE_BOXES);
    let out = dir.path().join("out.jsonl");
    let o = boxkit(&["nms", "--variant", "cosine", "--nt", "0.3", "--in", &input, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    let ids: Vec<u64> = lines.iter().map(|v| v["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![0, 2, 1]);
    let want = 0.7 * (std::f64::consts::FRAC_PI_2 * 0.5 / 0.7).cos();
    let got = lines[2]["score"].as_f64().unwrap();
    assert!((got - want).abs() < 1e-8, "{got} vs {want}");

    let again = dir.path().join("again.jsonl");
    boxkit(&["nms", "--variant", "cosine", "--nt", "0.3", "--in", &input, "--out", again.to_str().unwrap()]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn nms_greedy_drops_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "dets.jsonl", THREE_BOXES);
    let o = boxkit(&["nms", "--variant", "greedy", "--nt", "0.5", "--in", &input]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = boxkit(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(boxkit(&["nms", "--bogus"]).status.code(), Some(2));
    assert_eq!(boxkit(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_without_ground_truth_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(dir.path(), "ann.jsonl", "{\"image\": \"a\", \"full\": [0, 0, 10, 10], \"ignore\": true}\n");
    let dets = write(dir.path(), "dets.jsonl", "{\"image\": \"a\", \"id\": 0, \"box\": [0, 0, 10, 10], \"score\": 0.9}\n");
    let o = boxkit(&["eval", "--dets", &dets, "--annotations", &ann, "--subset", "all"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ground truth"));
}

#[test]
fn eval_prints_miss_rate_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(
        dir.path(),
        "ann.jsonl",
        "{\"image\": \"a\", \"full\": [0, 0, 30, 80]}\n{\"image\": \"b\", \"full\": [0, 0, 30, 80]}\n",
    );
    let dets = write(
        dir.path(),
        "dets.jsonl",
        "{\"image\": \"a\", \"id\": 0, \"box\": [0, 0, 30, 80], \"score\": 0.9}\n",
    );
    let curve = dir.path().join("curve.csv");
    let o = boxkit(&[
        "eval",
        "--dets",
        &dets,
        "--annotations",
        &ann,
        "--iou",
        "0.5",
        "--subset",
        "reasonable",
        "--curve",
        curve.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "MR-2: 50.00%");
    let csv = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(csv, "threshold,fppi,miss_rate\n0.9,0,0.5\n");
}

#[test]
fn anchors_match_library() {
    let o = boxkit(&["anchors", "--width", "64", "--height", "48"]);
    assert_eq!(o.status.code(), Some(0));
    let want = generate_anchors(64, 48, &AnchorLevelConfig::<f64>::pedestrian_default()).unwrap();
    let text = stdout(&o);
    assert_eq!(text.lines().count(), want.len());
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["level"], 0);
    assert_eq!(first["x1"].as_f64().unwrap(), want[0].bbox.x1());
}

#[test]
fn assign_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let anchors = dir.path().join("anchors.jsonl");
    let o = boxkit(&["anchors", "--width", "128", "--height", "128", "--out", anchors.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let ann = write(
        dir.path(),
        "ann.jsonl",
        "{\"image\": \"a\", \"full\": [20, 10, 44, 70], \"visible\": [20, 10, 44, 40]}\n",
    );
    let samples = dir.path().join("samples.jsonl");
    let o = boxkit(&[
        "assign",
        "--anchors",
        anchors.to_str().unwrap(),
        "--annotations",
        &ann,
        "--tneg",
        "0.3",
        "--tpos",
        "0.4",
        "--out",
        samples.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let from_samples = boxkit(&["stats", "--samples", samples.to_str().unwrap(), "--bins", "5"]);
    let direct = boxkit(&[
        "stats",
        "--anchors",
        anchors.to_str().unwrap(),
        "--annotations",
        &ann,
        "--tneg",
        "0.3",
        "--tpos",
        "0.4",
        "--bins",
        "5",
    ]);
    assert_eq!(from_samples.status.code(), Some(0));
    assert_eq!(direct.status.code(), Some(0));
    assert_eq!(from_samples.stdout, direct.stdout);
    assert_eq!(from_samples.stderr, direct.stderr);
    assert!(stdout(&direct).starts_with("bin_low,bin_high,count\n"));
    assert_eq!(stdout(&direct).lines().count(), 6);
}

#[test]
fn bad_thresholds_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(dir.path(), "ann.jsonl", "{\"image\": \"a\", \"full\": [0, 0, 10, 20]}\n");
    let o = boxkit(&["stats", "--annotations", &ann, "--width", "64", "--height", "64", "--tneg", "0.6", "--tpos", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn loss_kinds() {
    let o = boxkit(&["loss", "--kind", "giou", "--pred", "3,3,7,7", "--gt", "0,0,10,10"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "0.84");
    let all = boxkit(&["loss", "--kind", "all", "--pred", "1,1,9,9", "--gt", "0,0,10,10", "--sigma", "0.5"]);
    assert_eq!(all.status.code(), Some(0));
    let names: Vec<String> = stdout(&all).lines().map(|l| l.split('\t').next().unwrap().to_string()).collect();
    assert_eq!(names, ["smoothl1", "iou", "giou", "diou", "centeriou"]);
    assert_eq!(boxkit(&["loss", "--kind", "mse", "--pred", "0,0,1,1", "--gt", "0,0,1,1"]).status.code(), Some(1));
}

#[test]
fn grad_check_reports_pass() {
    let o = boxkit(&["grad-check", "--trials", "60", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.starts_with("max relative error: "));
    assert_eq!(text.lines().last(), Some("PASS"));
}

#[test]
fn config_file_sets_nms_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", "[nms]\nvariant = \"greedy\"\nnt = 0.5\n");
    let input = write(dir.path(), "dets.jsonl", THREE_BOXES);
    let o = boxkit(&["--config", &cfg, "nms", "--in", &input]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
    let bad = write(dir.path(), "bad.toml", "[loss]\nsigma = 2.0\n");
    assert_eq!(boxkit(&["--config", &bad, "nms", "--in", &input]).status.code(), Some(1));
}
