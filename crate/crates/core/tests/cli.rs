use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const ZERO_NOISE: &str = r#"
seed = 7

[[mix]]
kind = "FourWay"
action = "LeftTurn"
count = 10

[sim]
heading_noise_std = 0.0
position_noise_std = 0.0
pose_dropout_rate = 0.0
label_flip_rate = 0.0

[split]
train = 0.5
val = 0.0
test = 0.5

[train]
epochs = 1

[intent]
train_per_block = 1
test_per_block = 1
"#;

fn srp(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_srp"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn clean_left_turns_are_all_accepted_and_correct() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = json(&srp(tmp.path(), ZERO_NOISE, &["--json", "gen"]));
    assert_eq!(gen["episodes"], 10);
    assert_eq!(gen["accepted"], 10);
    let eval = json(&srp(tmp.path(), ZERO_NOISE, &["--json", "eval-labeler"]));
    assert_eq!(eval["acceptance_rate"], 1.0);
    assert_eq!(eval["accuracy"], 1.0);

    let first = std::fs::read(tmp.path().join("out/eval-labeler.json")).unwrap();
    assert_eq!(code(&srp(tmp.path(), ZERO_NOISE, &["eval-labeler"])), 0);
    assert_eq!(std::fs::read(tmp.path().join("out/eval-labeler.json")).unwrap(), first);
    assert!(!tmp.path().join("out/.srp.lock").exists());
}

#[test]
fn unaffordable_lane_change_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"
[[mix]]
kind = "StraightMultiLane"
action = "LeftLaneChange"
count = 2
lanes = 1
"#;
    let o = srp(tmp.path(), cfg, &["gen"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("LeftLaneChange"), "{err}");
    assert!(!tmp.path().join("out/dataset.jsonl").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srp(tmp.path(), "seed = 1\n[sim]\nspeed = 3.0\n", &["gen"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srp(tmp.path(), "", &["eval-labeler"]);
    assert_eq!(code(&o), 2);
    let o = srp(tmp.path(), "", &["--dataset", "/nonexistent/d.jsonl", "train-srp"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn all_rejected_dataset_is_flagged_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"
[[mix]]
kind = "ThreeWayLeftRight"
action = "RightTurn"
count = 4

[sim]
pose_dropout_rate = 0.9

[intent]
train_per_block = 1
test_per_block = 1
"#;
    let gen = json(&srp(tmp.path(), cfg, &["--json", "gen"]));
    assert_eq!(gen["accepted"], 0);
    let eval = json(&srp(tmp.path(), cfg, &["--json", "eval-labeler"]));
    assert_eq!(eval["no_accepted_frames"], true);
    assert_eq!(eval["accuracy"], Value::Null);
    assert_eq!(eval["reject_reasons"]["ReconstructionFailure"], 4);
}

#[test]
fn mismatched_config_hash_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    json(&srp(tmp.path(), ZERO_NOISE, &["--json", "gen"]));
    json(&srp(tmp.path(), ZERO_NOISE, &["--json", "train-srp"]));
    json(&srp(tmp.path(), ZERO_NOISE, &["--json", "eval-srp"]));
    let o = srp(tmp.path(), ZERO_NOISE, &["--seed", "6", "eval-srp"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));
}

#[test]
fn busy_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("out")).unwrap();
    std::fs::write(tmp.path().join("out/.srp.lock"), "1\n").unwrap();
    let o = srp(tmp.path(), "", &["export-bev"]);
    assert_eq!(code(&o), 1);
    assert!(tmp.path().join("out/.srp.lock").exists());
}

#[test]
fn shipped_default_config_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let shipped = srp_core::config::RunConfig::load(&path).unwrap();
    assert_eq!(shipped, srp_core::config::RunConfig::default());
}
