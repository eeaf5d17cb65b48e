//! The command-line binary end to end, including its exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn hrcn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrcenternet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    o
}

#[test]
fn synth_train_infer_eval_bench_viz() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(hrcn(&["synth", "--pages", "10", "--seed", "3", "--out", "pages"], d));
    let pngs = std::fs::read_dir(d.join("pages"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 10);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("pages/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 3);

    let before = std::fs::read(d.join("pages/annotations.jsonl")).unwrap();
    ok(hrcn(&["train", "--data", "pages", "--epochs", "2", "--out", "m.ckpt"], d));
    assert_eq!(before, std::fs::read(d.join("pages/annotations.jsonl")).unwrap(), "training touched its input");
    assert!(d.join("m.ckpt").is_file() && d.join("m.ckpt.manifest.json").is_file());

    ok(hrcn(
        &["infer", "--model", "m.ckpt", "--image", "pages/p0.png", "--image", "pages/p1.png", "--conf", "0.1"],
        d,
    ));
    let text = std::fs::read_to_string(d.join("detections.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    assert!(records[0]["boxes"].is_array());

    let o = ok(hrcn(&["eval", "--model", "m.ckpt", "--data", "pages", "--holdout-only"], d));
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean_iou"));
    let last = std::fs::read_to_string(d.join("eval.jsonl")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(last.lines().last().unwrap()).unwrap();
    assert_eq!(summary["summary"], true);

    ok(hrcn(&["bench", "--model", "m.ckpt", "--input-size", "128", "--warmup", "1"], d));
    let b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("bench.jsonl")).unwrap()).unwrap();
    assert!(b["p50_ms"].as_f64().unwrap() <= b["p95_ms"].as_f64().unwrap());

    ok(hrcn(&["viz", "--image", "pages/p0.png", "--detections", "detections.jsonl", "--out", "o.png"], d));
    assert!(image::open(d.join("o.png")).is_ok());

    ok(hrcn(&["encode", "--annotations", "pages/annotations.jsonl", "--out", "t"], d));
    assert!(d.join("t/p0.hrtg").is_file());
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(hrcn(&["synth", "--pages", "3", "--seed", "9", "--out", "a"], d));
    ok(hrcn(&["synth", "--pages", "3", "--seed", "9", "--out", "b"], d));
    for f in ["p0.png", "p1.png", "p2.png", "annotations.jsonl"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn corrupt_checkpoint_exits_3_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("broken.ckpt"), b"HRCN\x01\x00garbage").unwrap();
    ok(hrcn(&["synth", "--pages", "1", "--out", "pages"], d));
    let o = hrcn(&["infer", "--model", "broken.ckpt", "--image", "pages/p0.png"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("broken.ckpt"), "{}", stderr(&o));
}

#[test]
fn missing_image_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(hrcn(&["synth", "--pages", "1", "--out", "pages"], d));
    ok(hrcn(&["train", "--data", "pages", "--epochs", "1", "--out", "m.ckpt"], d));
    let o = hrcn(&["infer", "--model", "m.ckpt", "--image", "nowhere.png"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nowhere.png"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = hrcn(&["synth", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(hrcn(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn bad_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("typo.toml"), "[train]\nepoch = 3\n").unwrap();
    std::fs::write(d.join("broken.toml"), "[train\n").unwrap();
    std::fs::write(d.join("negative.toml"), "[train]\nlr = -1.0\n").unwrap();
    for cfg in ["typo.toml", "broken.toml", "negative.toml", "absent.toml"] {
        let o = hrcn(&["synth", "--pages", "1", "--config", cfg], d);
        assert_eq!(o.status.code(), Some(4), "{cfg}: {}", stderr(&o));
    }
}
