//! End-to-end checks of the binary: exit codes, file emission, and output
//! shape.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cvqkd"))
}

#[test]
fn analytic_sweep_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("run");
    let out = bin()
        .args([
            "sweep",
            "--distance-km",
            "15,50",
            "--xi",
            "0",
            "--mode",
            "analytic",
            "--seed",
            "3",
            "--out",
            prefix.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(prefix.with_extension("csv")).unwrap();
    assert!(csv.starts_with(
        "distance_km,G,xi,theoretical_bits_per_pulse,practical_bits_per_pulse,efficiency,"
    ));
    assert_eq!(csv.lines().count(), 3);
    let svg = std::fs::read_to_string(prefix.with_extension("svg")).unwrap();
    assert_eq!(svg.matches("<path").count(), 3);
    let meta = std::fs::read_to_string(dir.path().join("run.meta.json")).unwrap();
    assert!(meta.contains("\"seed\": 3"));
    assert!(meta.contains("loss_db"));
}

#[test]
fn sweep_without_out_prints_csv() {
    let out = bin()
        .args(["sweep", "--distance-km", "15", "--xi", "0", "--mode", "analytic"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
    assert!(stdout.lines().nth(1).unwrap().starts_with("15,"));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, "distances_km = [15.0]\nxi_values = [0.0]\nseed = 11\n").unwrap();
    let out = bin()
        .args([
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "12",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().nth(1).unwrap().ends_with(",12"), "{stdout}");
}

#[test]
fn config_errors_exit_1() {
    // unknown mode
    let out = bin()
        .args(["sweep", "--distance-km", "15", "--mode", "frobnicate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    // monte-carlo with too few samples
    let out = bin()
        .args(["sweep", "--distance-km", "15", "--mode", "monte-carlo", "--samples", "100"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    // malformed flag value
    let out = bin().args(["sweep", "--distance-km", "abc"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failing_cell_exits_2() {
    // 0 km: lossless channel, eavesdropper noise undefined at xi = 0
    let out = bin()
        .args(["sweep", "--distance-km", "0,15", "--mode", "analytic"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // the good cell still made it into the CSV
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3);
}

#[test]
fn session_writes_transcript_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sess");
    let out = bin()
        .args([
            "session",
            "--distance-km",
            "15",
            "--samples",
            "100000",
            "--seed",
            "9",
            "--out",
            prefix.to_str().unwrap(),
            "--dump",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("practical rate"));
    assert!(stdout.contains("key digest sha256"));
    let key = std::fs::read(prefix.with_extension("key")).unwrap();
    assert!(!key.is_empty());
    let digest = std::fs::read_to_string(dir.path().join("sess.key.sha256")).unwrap();
    assert_eq!(digest.trim().len(), 64);
    let transcript = std::fs::read(dir.path().join("sess.transcript.bin")).unwrap();
    assert!(!transcript.is_empty());
    let dump = std::fs::read_to_string(dir.path().join("sess.transcript.txt")).unwrap();
    assert!(dump.contains("PairAnnounce"));
    assert!(dump.contains("SyndromeInfo"));
}

#[test]
fn session_abort_exits_2() {
    let out = bin()
        .args([
            "session",
            "--distance-km",
            "150",
            "--xi",
            "0.6",
            "--samples",
            "100000",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-positive"));
}

#[test]
fn threshold_reports_values_and_lossless_case() {
    let out = bin()
        .args(["threshold", "--transmission", "0.001"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("0.499"), "{stdout}");

    let out = bin()
        .args(["threshold", "--transmission", "1.0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("no threshold"));

    let out = bin().args(["threshold"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
