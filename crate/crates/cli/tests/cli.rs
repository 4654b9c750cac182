// SPDX-License-Identifier: Apache-2.0
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rfsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfsync"))
        .args(args)
        .env_remove("RFSYNC_SEED")
        .output()
        .expect("spawn rfsync")
}

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/rabi_two_boards.json")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn example_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = rfsync(&["run", arg(&example()), "--out", arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/rabi_two_boards.csv");
    assert_eq!(read(&dir.path().join("result.csv")), read(&golden));
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["command"], "run");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let files = ["result.csv", "result.json", "manifest.json"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        assert!(rfsync(&["run", arg(&example()), "--out", arg(dir.path())]).status.success());
        runs.push(files.map(|f| read(&dir.path().join(f))));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn missing_boards_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = read(&example());
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("boards");
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = rfsync(&["run", arg(&cfg), "--out", arg(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boards"));
}

#[test]
fn raw_dump() {
    let dir = tempfile::tempdir().unwrap();
    assert!(rfsync(&["run", arg(&example()), "--raw", "--out", arg(dir.path())]).status.success());
    let bytes = std::fs::read(dir.path().join("result.bin")).unwrap();
    assert_eq!(&bytes[..4], b"QRES");
    // 5 amplitudes, 1 averaged shot, 2 channels.
    assert_eq!(bytes.len(), 8 + 32 + 5 * 2 * 16);
    assert!(!dir.path().join("result.csv").exists());
}

#[test]
fn sync_bench_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = rfsync(&["sync-bench", "--reps", "200", "--out", arg(dir.path())]);
    assert!(out.status.success());
    let csv = read(&dir.path().join("sync_bench.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("rep,skew_fs,resume_offset_cycles,tile_skew_fs"));
    assert_eq!(lines.clone().count(), 200);
    assert!(lines.all(|l| l.split(',').nth(1) == Some("0")));
    let summary: serde_json::Value = serde_json::from_str(&read(&dir.path().join("summary.json"))).unwrap();
    assert_eq!(summary["skew"]["max_fs"], 0.0);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let by_flag = dir.path().join("flag");
    let by_env = dir.path().join("env");
    let args = ["sync-bench", "--reps", "50", "--jitter-ps", "20", "--out"];
    let mut flagged = args.to_vec();
    flagged.extend([arg(&by_flag), "--seed", "5"]);
    assert!(rfsync(&flagged).status.success());
    let status = Command::new(env!("CARGO_BIN_EXE_rfsync"))
        .args(args)
        .arg(&by_env)
        .env("RFSYNC_SEED", "5")
        .status()
        .unwrap();
    assert!(status.success());
    let f = "sync_bench.csv";
    assert_eq!(read(&by_flag.join(f)), read(&by_env.join(f)));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(rfsync(&["sync-bench", "--boards", "1"]).status.code(), Some(2));
    assert_eq!(rfsync(&["res-flux", "--bias-range", "1:0:0.1"]).status.code(), Some(2));
    assert_eq!(rfsync(&["cz-chevron", "--pair", "q2"]).status.code(), Some(2));
    assert_eq!(rfsync(&["cz-chevron", "--pair", "q0,q9"]).status.code(), Some(2));
    assert_eq!(rfsync(&["nope"]).status.code(), Some(2));
}

#[test]
fn single_bias_res_flux() {
    let dir = tempfile::tempdir().unwrap();
    let out = rfsync(&[
        "res-flux",
        "--bias-range",
        "0",
        "--freq-range",
        "-1e6:2e6:100e3",
        "--nshots",
        "4",
        "--out",
        arg(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for q in 0..10 {
        let csv = read(&dir.path().join(format!("res_flux_q{q}.csv")));
        assert_eq!(csv.lines().next(), Some("freq_hz,bias_v,magnitude"));
        assert_eq!(csv.lines().count(), 1 + 31);
    }
    assert_eq!(read(&dir.path().join("sweet_spots.csv")).lines().count(), 11);
}

#[test]
fn chevron_pair_rules() {
    let dir = tempfile::tempdir().unwrap();
    let small = ["--dur-range", "0:20:2", "--amp-range", "0:0.4:0.2", "--nshots", "2", "--out", arg(dir.path())];
    let mut same = vec!["cz-chevron", "--pair", "q2,q3"];
    same.extend(small);
    assert_eq!(rfsync(&same).status.code(), Some(2));
    same.push("--allow-same-board");
    let out = rfsync(&same);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("chevron_q2_q3.csv"));
    assert_eq!(csv.lines().next(), Some("duration_ns,amplitude_v,norm_mag"));
}

#[test]
fn trace_has_events_from_both_boards() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    assert!(rfsync(&["trace", arg(&example()), "--out", arg(&path)]).status.success());
    let csv = read(&path);
    assert_eq!(csv.lines().next(), Some("board,cycle,event_kind,channel,time_fs"));
    assert!(csv.lines().any(|l| l.starts_with("0,")) && csv.lines().any(|l| l.starts_with("1,")));
    assert_eq!(rfsync(&["trace", arg(&example()), "--batch", "9", "--out", arg(&path)]).status.code(), Some(2));
}
