use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eqtrace"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn example_one_compare_passes_assert() {
    let cfg = configs().join("example1.json");
    let out = run(&["compare", cfg.to_str().unwrap(), "--assert"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# schema=1\nk,exact_re,exact_im,predicted_re"));
    assert!(text.contains("character_convention,Conjugate"));
}

#[test]
fn empty_ray_dimensions_are_zero() {
    let cfg = configs().join("empty_ray.json");
    let out = run(&["dim", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("0")));
}

#[test]
fn config_errors_exit_two() {
    assert_eq!(run(&["trace", "missing.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"model": {"d": 2, "g": 1, "W": [[1, 2, 3]]}, "ray": {"varpi": [1]}, "k_schedule": {"list": [5, 3]}}"#,
    );
    let out = run(&["compare", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    // no partial run
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    let no_seed = write_config(
        dir.path(),
        "noseed.json",
        r#"{"model": {"d": 2, "g": 1, "W": [[1, 2, 3]]}, "ray": {"varpi": [1]}, "k_schedule": {"list": [5]}}"#,
    );
    assert_eq!(run(&["probe-kernel", no_seed.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn budget_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "huge.json",
        r#"{"model": {"d": 2, "g": 1, "W": [[1, 2, 3]]}, "ray": {"varpi": [1]}, "k_schedule": {"list": [5, 100000000]}}"#,
    );
    let out = run(&["trace", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(2).unwrap().ends_with(",ok"));
    assert!(text.lines().nth(3).unwrap().ends_with(",budget_exceeded"));
}

#[test]
fn assert_threshold_exit_four() {
    let cfg = configs().join("example1.json");
    let out = run(&["compare", cfg.to_str().unwrap(), "--assert", "--tolerance", "1e-4"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn outputs_are_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "probe.json",
        r#"{
            "model": {"d": 2, "g": 2, "W": [[1, 0, 0], [0, 1, 2]]},
            "ray": {"varpi": [1, 2]},
            "k_schedule": {"geometric": {"start": 10, "stop": 200, "count": 10}},
            "probe": {"samples": 5000, "pairs": 10, "k_values": [10, 20, 40]},
            "outputs": {"stem": "p"}
        }"#,
    );
    let mut texts = Vec::new();
    for (i, threads) in ["1", "1", "4"].iter().enumerate() {
        let out_dir = dir.path().join(format!("o{i}"));
        for cmd in ["compare", "probe-kernel"] {
            let out = run(&[
                cmd,
                cfg.to_str().unwrap(),
                "--seed",
                "3",
                "--threads",
                threads,
                "--out",
                out_dir.to_str().unwrap(),
            ]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let read = |n: &str| std::fs::read(out_dir.join(n)).unwrap();
        texts.push((read("p.rows.csv"), read("p.probe.csv"), read("p.summary.csv")));
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[0], texts[2]);
}

#[test]
fn json_record_round_trips() {
    let cfg = configs().join("g2.json");
    let out = run(&["compare", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let record: eqtrace::harness::RunRecord = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record.schema, 1);
    assert_eq!(record.components.len(), 1);
    assert!(record.rows.iter().all(|r| r.failure.is_none()));

    let cfg = configs().join("empty_ray.json");
    let out = run(&["compare", cfg.to_str().unwrap(), "--format", "json"]);
    let record: eqtrace::harness::RunRecord = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record.fit.unwrap().residual_slope, f64::NEG_INFINITY);
}
