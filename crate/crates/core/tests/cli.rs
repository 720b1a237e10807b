use std::path::Path;
use std::process::{Command, Output};

fn semsplit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semsplit")).arg("-w").arg(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn missing_artifacts_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    for step in [&["train-teacher"][..], &["train"], &["train-policy"], &["sweep"], &["plot"], &["inspect-checkpoint", "none.ckpt"]] {
        let o = semsplit(dir.path(), step);
        assert_eq!(code(&o), 3, "{step:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&semsplit(dir.path(), &["--set", "train.nope=1", "show-config"])), 2);
    assert_eq!(code(&semsplit(dir.path(), &["--set", "train.bits=0", "show-config"])), 2);
    assert_eq!(code(&semsplit(dir.path(), &["--set", "data.input_dim=32", "show-config"])), 2);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\"train\": {\"epochs\": \"many\"}}").unwrap();
    assert_eq!(code(&semsplit(dir.path(), &["-c", cfg.to_str().unwrap(), "show-config"])), 2);
}

#[test]
fn show_config_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let o = semsplit(dir.path(), &["--seed", "9", "--set", "sweep.bers=[0,0.01]", "show-config"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["train"]["seed"], 9);
    assert_eq!(v["sweep"]["bers"], serde_json::json!([0.0, 0.01]));
}

#[test]
fn unreachable_teacher_gate_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let set = ["--set", "data.samples=500", "--set", "train.teacher_epochs=1", "--set", "train.teacher_gate=1.0"];
    assert_eq!(code(&semsplit(dir.path(), &[&set[..], &["gen-data"]].concat())), 0);
    let o = semsplit(dir.path(), &[&set[..], &["train-teacher"]].concat());
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn plot_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let csv = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sweep_small.csv");
    let out = dir.path().join("p.svg");
    let o = semsplit(dir.path(), &["plot", "--input", csv.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("<svg"));

    let set = ["--set", "data.samples=500", "--set", "train.teacher_epochs=2", "--set", "train.teacher_gate=0"];
    assert_eq!(code(&semsplit(dir.path(), &[&set[..], &["gen-data"]].concat())), 0);
    assert_eq!(code(&semsplit(dir.path(), &[&set[..], &["train-teacher"]].concat())), 0);
    let o = semsplit(dir.path(), &["inspect-checkpoint", dir.path().join("teacher.ckpt").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kind"], "teacher");

    std::fs::write(dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    assert_ne!(code(&semsplit(dir.path(), &["inspect-checkpoint", dir.path().join("junk.ckpt").to_str().unwrap()])), 0);
}

#[test]
fn partial_config_file_accepts_overrides_of_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "{\"train\": {\"epochs\": 7}}").unwrap();
    let o = semsplit(dir.path(), &["-c", cfg.to_str().unwrap(), "--set", "sweep.seeds=[3]", "show-config"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["train"]["epochs"], 7);
    assert_eq!(v["sweep"]["seeds"], serde_json::json!([3]));
}
