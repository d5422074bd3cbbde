use std::path::Path;
use std::process::{Command, Output};

fn planekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planekit"))
        .args(args)
        .env_remove("PLANEKIT_THREADS")
        .output()
        .expect("spawning planekit")
}

fn code(args: &[&str]) -> i32 {
    planekit(args).status.code().expect("exit code")
}

fn stdout(args: &[&str]) -> String {
    let out = planekit(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

#[test]
fn gradcheck_exit_codes() {
    assert_eq!(code(&["gradcheck", "--trials", "0"]), 2);
    assert_eq!(code(&["gradcheck", "--trials", "3", "--inject-fault", "l_depth"]), 1);
    assert_eq!(code(&["gradcheck", "--trials", "3", "--inject-fault", "nope"]), 2);
    assert_eq!(code(&["gradcheck", "--trials", "3"]), 0);
}

#[test]
fn synth_gen_writes_one_manifest_and_four_maps_per_view() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&["synth-gen", "--out", s(dir.path()), "--scenes", "1", "--boxes", "0"]);
    assert_eq!(
        files(dir.path()),
        ["scene_0000.json", "scene_0000_depth.fmap", "scene_0000_instances.fmap", "scene_0000_planes.fmap", "scene_0000_rgb.fmap"]
    );
}

#[test]
fn synth_gen_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        stdout(&["synth-gen", "--out", s(d.path()), "--scenes", "2", "--pairs", "--drop-prob", "0.5", "--seed", "9"]);
    }
    let names = files(a.path());
    assert_eq!(names, files(b.path()));
    assert_eq!(names.len(), 20);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n}");
    }
}

#[test]
fn bad_inputs_exit_with_usage_errors() {
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&["train-toy", "--pairs", s(empty.path())]), 2);
    assert_eq!(code(&["synth-gen", "--out", "/proc/planekit-unwritable"]), 2);
    assert_eq!(code(&["synth-gen", "--out", s(empty.path()), "--drop-prob", "1.5"]), 2);
    assert_eq!(code(&["warp-check", "--pair", s(&empty.path().join("missing.json"))]), 2);
}

#[test]
fn eval_scores_ground_truth_perfectly_and_rejects_mismatched_sets() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    stdout(&["synth-gen", "--out", s(&gt), "--scenes", "3", "--seed", "2"]);
    let csv = dir.path().join("m.csv");
    let svg = dir.path().join("r.svg");
    let out = stdout(&["eval", "--pred", s(&gt), "--gt", s(&gt), "--csv", s(&csv), "--svg", s(&svg)]);
    assert!(out.contains("abs_rel=0.000000"), "{out}");
    assert!(out.contains("ap=1.0000 map=1.0000"), "{out}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));

    let other = dir.path().join("other");
    stdout(&["synth-gen", "--out", s(&other), "--scenes", "2", "--seed", "2"]);
    let out = planekit(&["eval", "--pred", s(&other), "--gt", s(&gt)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene_0002"));
}

#[test]
fn warp_check_passes_and_warns_without_overlap() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&["synth-gen", "--out", s(dir.path()), "--pairs", "--scenes", "1", "--seed", "5"]);
    let pair = dir.path().join("pair_0000_s.json");
    let out = stdout(&["warp-check", "--pair", s(&pair)]);
    assert!(!out.contains("FAIL"), "{out}");

    let far = dir.path().join("far");
    stdout(&["synth-gen", "--out", s(&far), "--pairs", "--scenes", "1", "--seed", "5", "--yaw", "180"]);
    let out = stdout(&["warp-check", "--pair", s(&far.join("pair_0000_s.json"))]);
    assert!(out.contains("warning: no overlap"), "{out}");
}

#[test]
fn train_toy_with_zero_steps_logs_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs");
    stdout(&["synth-gen", "--out", s(&pairs), "--pairs", "--scenes", "2"]);
    let report = dir.path().join("loss.csv");
    let out = stdout(&["train-toy", "--pairs", s(&pairs), "--steps", "0", "--report", s(&report)]);
    assert!(out.contains("pairs=2 steps=0"), "{out}");
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0,"));
}
