mod common;

use std::process::{Command, Output, Stdio};

use common::bin;
use wattrace::trace::read_csv_str;

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).stdin(Stdio::null()).output().unwrap()
}

const SIM: &str = "simulated:constant:10";

#[test]
fn file_output_keeps_stdout_for_the_child_only() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = run(&["--probe", SIM, "-o", csv.to_str().unwrap(), "--", "echo", "hello"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, b"hello\n");
    let log = dir.path().join("cmd.log");
    let out = run(&[
        "--probe",
        SIM,
        "-o",
        csv.to_str().unwrap(),
        "--command-output",
        log.to_str().unwrap(),
        "--",
        "sh",
        "-c",
        "echo out; echo err >&2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&log).unwrap(), "out\nerr\n");
}

#[test]
fn streamed_trace_moves_child_stdout_to_stderr() {
    let out = run(&["--probe", SIM, "-o", "-", "--", "echo", "from-child"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    // The argv is recorded in the metadata line, so look for the output line.
    assert!(!stdout.lines().any(|l| l == "from-child"));
    let t = read_csv_str(&stdout).unwrap();
    assert!(!t.rows.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("from-child"));
}

#[test]
fn piped_stdout_is_the_default_destination() {
    let out = run(&["--probe", SIM, "--no-metadata", "--", "true"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("Delta,Time,PACKAGE_ENERGY (J),PACKAGE_POWER (W)\n"), "{stdout}");
}

#[test]
fn summary_goes_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = run(&["--probe", SIM, "--summary", "-o", csv.to_str().unwrap(), "--", "sleep", "0.3"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Energy consumption in joules"), "{stderr}");
    assert!(out.stdout.is_empty());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let csv = csv.to_str().unwrap();
    assert_eq!(run(&["--probe", SIM, "-o", csv, "--", "sh", "-c", "exit 42"]).status.code(), Some(42));
    assert_eq!(run(&["--probe", SIM, "-o", csv, "--", "no-such-command-xyz"]).status.code(), Some(127));
    assert_eq!(run(&["--probe", SIM, "-o", csv, "--", "/"]).status.code(), Some(126));
    assert_eq!(run(&["--probe", SIM, "-o", csv, "--", "sh", "-c", "kill -TERM $$"]).status.code(), Some(143));
    assert_eq!(run(&[]).status.code(), Some(64));
    assert_eq!(run(&["--iterval", "100", "--", "true"]).status.code(), Some(64));
    assert_eq!(run(&["--probe", "bogus", "--", "true"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["analyze", "/nonexistent-dir-xyz"]).status.code(), Some(70));
}

#[test]
fn spawn_failure_keeps_only_the_initial_sample() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    run(&["--probe", SIM, "-o", csv.to_str().unwrap(), "--", "no-such-command-xyz"]);
    let t = read_csv_str(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 1);
}

#[test]
fn probe_env_override() {
    let out = Command::new(bin())
        .args(["-o", "-", "--", "true"])
        .env("WATTRACE_PROBE", "simulated:constant:1")
        .stdin(Stdio::null())
        .output()
        .unwrap();
    let t = read_csv_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(t.schema[0].name, "PACKAGE_ENERGY");
    assert_eq!(t.meta.argv, ["true"]);
}

#[test]
fn schedule_is_deterministic_per_seed() {
    let a = run(&["schedule", "chrome", "idle", "--seed", "9"]);
    let b = run(&["schedule", "chrome", "idle", "--seed", "9"]);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("# seed: 9\nposition,condition,repetition\n"));
    assert_eq!(text.lines().count(), 42);
    let unseeded = String::from_utf8(run(&["schedule", "x", "-r", "2"]).stdout).unwrap();
    assert!(unseeded.starts_with("# seed: "));
}

#[test]
fn probes_listing_runs() {
    let out = run(&["probes"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("platform:"));
    let json = run(&["probes", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert!(v.is_array());
}

#[test]
fn analyze_writes_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    for (cond, spec) in [("IDLE", "constant:2"), ("load", "constant:5")] {
        std::fs::create_dir_all(dir.path().join(cond)).unwrap();
        for k in 0..2 {
            let csv = dir.path().join(cond).join(format!("{k}.csv"));
            let out = run(&["--probe", &format!("simulated:{spec}"), "-o", csv.to_str().unwrap(), "--", "sleep", "0.5"]);
            assert_eq!(out.status.code(), Some(0));
        }
    }
    let svg = dir.path().join("fig.svg");
    let out = run(&["analyze", dir.path().to_str().unwrap(), "--plot", svg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("load vs IDLE"), "{stdout}");
    assert!(svg.exists());
    assert!(dir.path().join("fig.csv").exists());
}
