use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn gradpush(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradpush")).args(args).output().expect("spawn gradpush")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero() {
    assert_eq!(gradpush(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(gradpush(&["rasgp", "--bogus"]).status.code(), Some(2));
    assert_eq!(gradpush(&["rasgp", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"topology": {"kind": "cycle", "n": 4, "bidirectional": true}, "faults": {"l_u": 0, "l_f": 0, "l_del": 1, "p_w": 1.0, "p_f": 0.0}, "horizon": 10}"#).unwrap();
    let out = gradpush(&["raps", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(&cfg, r#"{"topology": {"kind": "cycle", "n": 4}, "faults": {}, "horizon": 10, "colour": 1}"#).unwrap();
    assert_eq!(gradpush(&["raps", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn verify_campaign_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradpush(&["verify", "--config", s(&config("small.json")), "--runs", "4", "--horizon", "120", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("verification.txt").is_file());
}

#[test]
fn raps_writes_consensus_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradpush(&["raps", "--config", s(&config("masked.json")), "--runs", "3", "--verify", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("consensus.csv")).unwrap();
    assert!(csv.starts_with("k,max_error\n"));
    assert_eq!(csv.lines().count(), 1 + 501);
}

#[test]
fn rasgp_output_contract_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradpush(&["rasgp", "--config", s(&config("small.json")), "--runs", "6", "--horizon", "250", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.json", "errors.csv", "k_errors.csv", "errors.svg", "optimum.txt"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let errors = fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert!(errors.starts_with("k,E_dist,E_c,E_dist_std,E_c_std\n"));
    // 250 slots plus slot 0 in windows of 100: three windows
    assert_eq!(errors.lines().count(), 1 + 3);
    assert_eq!(fs::read_dir(dir.path().join("raw")).unwrap().count(), 6);

    let replay = gradpush(&["replay", "--config", s(&dir.path().join("config.json"))]);
    let stdout = String::from_utf8_lossy(&replay.stdout);
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    assert!(stdout.contains("replay identical"), "{stdout}");
}

#[test]
fn replay_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradpush(&["rasgp", "--config", s(&config("small.json")), "--runs", "2", "--horizon", "50", "--out", s(dir.path())]);
    assert!(out.status.success());
    let f = dir.path().join("raw/run_00001.csv");
    let mut text = fs::read_to_string(&f).unwrap();
    text.push_str("51,0.5,0.5\n");
    fs::write(&f, text).unwrap();
    let replay = gradpush(&["replay", "--config", s(&dir.path().join("config.json"))]);
    assert_eq!(replay.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&replay.stderr).contains("run_00001.csv"));
}
