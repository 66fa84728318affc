//! End-to-end runs of the command-line binary: exit codes, emitted
//! files, and the failure paths.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_contego"));
    c.env_remove("CONTEGO_OUT_DIR");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn generate_analyze_optimize_simulate_round_trip() {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();

    let out = run_in(
        d,
        &[
            "generate", "--n-rt", "2", "--n-sec", "2", "--util", "0.1", "--seed", "1",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "generate: {}", stderr(&out));
    let taskset = d.join("taskset-seed1.json");
    assert!(taskset.exists(), "generate announced {}", stdout(&out));

    let out = run_in(d, &["analyze", taskset.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "analyze: {}", stderr(&out));
    assert!(
        stdout(&out).contains("rt core schedulable"),
        "analyze said: {}",
        stdout(&out)
    );

    let out = run_in(d, &["optimize", taskset.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "optimize: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("passive: eta"), "missing passive line: {text}");
    assert!(text.contains("active: eta"), "missing active line: {text}");
    let solution = d.join("taskset-seed1.solution.json");
    assert!(solution.exists(), "optimize announced {text}");

    let script = d.join("storm.json");
    fs::write(&script, r#"[{"time": "9.5", "class": "cls1"}]"#).expect("script written");
    let out = run_in(
        d,
        &[
            "simulate",
            taskset.to_str().unwrap(),
            "--solution",
            solution.to_str().unwrap(),
            "--horizon",
            "200",
            "--script",
            script.to_str().unwrap(),
            "--switch-timeout",
            "40",
            "--name",
            "storm",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "simulate: {}", stderr(&out));
    let summary = fs::read_to_string(d.join("storm.summary.csv")).expect("summary written");
    assert!(summary.contains("rt_deadline_misses,0"), "summary: {summary}");
    assert!(summary.contains("mode_switches,2"), "summary: {summary}");
    let trace = fs::read_to_string(d.join("storm.trace.tsv")).expect("trace written");
    assert!(trace.lines().any(|l| l.contains("MODE_SWITCH")));
    assert!(trace.lines().any(|l| l.contains("ANOMALY_DETECT")));
    let detections = fs::read_to_string(d.join("storm.detections.csv")).expect("detections written");
    assert!(detections.lines().count() >= 2, "detections: {detections}");
}

#[test]
fn infeasible_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();

    // The RT core alone overruns the processor.
    let overload = d.join("overload.json");
    fs::write(
        &overload,
        r#"{
  "rt_tasks": [
    {"id": "ctl1", "wcet": "3", "period": "5"},
    {"id": "ctl2", "wcet": "2.9", "period": "5"}
  ],
  "passive_security": [{"id": "scan", "wcet": "1", "desired_period": "10", "max_period": "20"}],
  "active_security": [{"id": "scan", "wcet": "1", "desired_period": "10", "max_period": "20"}],
  "min_active_level": 1
}"#,
    )
    .expect("written");
    let out = run_in(d, &["analyze", overload.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{} {}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("rt core unschedulable"));

    let out = run_in(d, &["optimize", overload.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    assert!(text.contains("unschedulable:"), "{text}");
    assert!(text.contains("hint:"), "{text}");
    assert!(!d.join("overload.solution.json").exists());

    // Schedulable RT core, but the monitor demands more than any
    // bottom-priority server can supply and has no period slack.
    let starved = d.join("starved.json");
    fs::write(
        &starved,
        r#"{
  "rt_tasks": [{"id": "ctrl", "wcet": "2.5", "period": "5"}],
  "passive_security": [{"id": "scan", "wcet": "3", "desired_period": "6", "max_period": "6"}],
  "active_security": [{"id": "scan", "wcet": "3", "desired_period": "6", "max_period": "6"}],
  "min_active_level": 1
}"#,
    )
    .expect("written");
    let out = run_in(d, &["optimize", starved.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stdout(&out).contains("no feasible bottom-priority server"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn errors_and_usage_exit_with_code_one() {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();

    let out = run_in(d, &["analyze", "no-such-file.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error:"), "{}", stderr(&out));

    let out = bin().arg("--help").output().expect("binary runs");
    assert_eq!(out.status.code(), Some(0));

    let out = bin().arg("frobnicate").output().expect("binary runs");
    assert_eq!(out.status.code(), Some(1));

    let out = run_in(
        d,
        &[
            "generate", "--n-rt", "1", "--n-sec", "0", "--util", "0.1", "--seed", "2",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let taskset = d.join("taskset-seed2.json");
    let out = run_in(
        d,
        &["simulate", taskset.to_str().unwrap(), "--horizon", "0"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("horizon"), "{}", stderr(&out));
}

#[test]
fn env_var_supplies_the_default_output_dir() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = Command::new(env!("CARGO_BIN_EXE_contego"))
        .env("CONTEGO_OUT_DIR", dir.path())
        .args([
            "generate", "--n-rt", "1", "--n-sec", "1", "--util", "0.1", "--seed", "9",
        ])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("taskset-seed9.json").exists());
}
