//! End-to-end tests for the `avi` binary: exit codes, output shape, and
//! run-to-run determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn repo_path(rel: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("../..");
    p.push(rel);
    p.to_str().unwrap().to_string()
}

fn avi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn validate_reports_mode_coverage() {
    let out = avi(&["validate", "--routing", &repo_path("configs/table4.cfg")]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("2/7 = 28.6%"));
    assert!(text.contains("3/7 = 42.9%"));
    assert!(text.contains("5/7 = 71.4%"));
    assert!(text.contains("1/7 = 14.3%"));
}

#[test]
fn validate_rejects_bad_routing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "checklist = [\"x\"]\n[assignments]\nx = [\"Z9\"]\n").unwrap();
    let out = avi(&["validate", "--routing", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inspect_pass_exits_zero() {
    let out = avi(&[
        "inspect",
        "--routing",
        &repo_path("configs/table1.cfg"),
        "--manifest",
        &repo_path("data/manifest_demo.jsonl"),
        "--evidence",
        &repo_path("data/evidence_pass.json"),
        "--latency",
        &repo_path("configs/latency_full.toml"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("PASS"));
    assert!(text.contains("285.0"));
}

#[test]
fn inspect_fail_exits_one() {
    let out = avi(&[
        "inspect",
        "--routing",
        &repo_path("configs/table1.cfg"),
        "--manifest",
        &repo_path("data/manifest_demo.jsonl"),
        "--evidence",
        &repo_path("data/evidence_fail.json"),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"], "FAIL");
    assert_eq!(report["extra"][0], "antenna");
}

#[test]
fn inspect_missing_file_exits_two() {
    let out = avi(&[
        "inspect",
        "--routing",
        &repo_path("configs/table1.cfg"),
        "--manifest",
        &repo_path("data/manifest_demo.jsonl"),
        "--evidence",
        "/nonexistent/evidence.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_json_is_deterministic() {
    let args = [
        "simulate",
        "--routing",
        &repo_path("configs/table1.cfg"),
        "--latency",
        &repo_path("configs/latency_full.toml"),
        "--noise",
        &repo_path("configs/noise_demo.toml"),
        "--vehicles",
        "60",
        "--seed",
        "41",
        "--format",
        "json",
    ];
    let a = avi(&args);
    let b = avi(&args);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(summary["vehicles"], 60);
}

#[test]
fn ablate_renders_all_modes() {
    let out = avi(&[
        "ablate",
        "--routing",
        &repo_path("configs/table4.cfg"),
        "--latency",
        &repo_path("configs/latency_full.toml"),
        "--vehicles",
        "40",
        "--seed",
        "5",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    for label in ["T1 (Front)", "T2 (Top)", "T3 (Rear)", "Side", "No Seg.", "Full AVI System"] {
        assert!(text.contains(label), "missing row {label}");
    }
}

#[test]
fn eval_boxes_and_masks() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds.json");
    let gts = dir.path().join("gts.json");
    std::fs::write(
        &preds,
        r#"[{"image":"a","class":"logo","bbox":{"x":0.1,"y":0.1,"w":0.2,"h":0.2},"score":0.9}]"#,
    )
    .unwrap();
    std::fs::write(
        &gts,
        r#"[{"image":"a","class":"logo","bbox":{"x":0.1,"y":0.1,"w":0.2,"h":0.2}}]"#,
    )
    .unwrap();
    let out = avi(&[
        "eval-boxes",
        "--preds",
        preds.to_str().unwrap(),
        "--gts",
        gts.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["map"], 1.0);

    let poly = r#"[{"class":"scratch","polygon":[[0.2,0.2],[0.6,0.2],[0.6,0.6],[0.2,0.6]]}]"#;
    std::fs::write(&preds, poly).unwrap();
    std::fs::write(&gts, poly).unwrap();
    let out = avi(&[
        "eval-masks",
        "--preds",
        preds.to_str().unwrap(),
        "--gts",
        gts.to_str().unwrap(),
        "--raster",
        "64",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["mean_iou"], 1.0);
}
