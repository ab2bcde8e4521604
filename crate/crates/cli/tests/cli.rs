//! Drives the `stagecast` binary end to end through temporary directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn stagecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stagecast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = stagecast(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small flood wave plus its solved field.
fn flood(dir: &TempDir) -> (PathBuf, PathBuf) {
    let scenario = path(dir, "flood.scenario");
    let field = path(dir, "flood.field");
    ok(&[
        "scenario",
        "--stations",
        "6",
        "--peak-factor",
        "2",
        "--seed",
        "1",
        "--out",
        s(&scenario),
    ]);
    ok(&[
        "simulate",
        "--scenario",
        s(&scenario),
        "--cells",
        "60",
        "--out",
        s(&field),
    ]);
    (scenario, field)
}

const TINY: &[&str] = &[
    "--preset",
    "compact",
    "--width",
    "8",
    "--blocks",
    "1",
    "--features",
    "8",
    "--batch-size",
    "32",
    "--collocation",
    "32",
];

fn train(dir: &TempDir, scenario: &Path, field: &Path, out: &str, extra: &[&str]) -> Vec<u8> {
    let ck = path(dir, out);
    let mut args = vec![
        "train",
        "--scenario",
        s(scenario),
        "--field",
        s(field),
        "--out",
        s(&ck),
    ];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    ok(&args);
    fs::read(ck).unwrap()
}

#[test]
fn every_subcommand_has_help() {
    for sub in [
        "scenario",
        "simulate",
        "train",
        "interpolant",
        "eval",
        "benchmark",
        "ablate",
    ] {
        let text = ok(&[sub, "--help"]);
        assert!(text.contains("Usage"), "{sub}");
    }
}

#[test]
fn malformed_scenario_key_is_a_parse_error_naming_the_line() {
    let dir = TempDir::new().unwrap();
    let scenario = path(&dir, "a.scenario");
    ok(&["scenario", "--out", s(&scenario)]);
    let text = fs::read_to_string(&scenario).unwrap();
    let (n, _) = text
        .lines()
        .enumerate()
        .find(|(_, l)| l.trim_start().starts_with("manning_n"))
        .unwrap();
    fs::write(&scenario, text.replacen("manning_n", "mannings_n", 1)).unwrap();
    let out = stagecast(&[
        "simulate",
        "--scenario",
        s(&scenario),
        "--out",
        s(&path(&dir, "f")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("line {}", n + 1)), "{err}");
}

#[test]
fn field_from_another_scenario_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (scenario, field) = flood(&dir);
    let other = path(&dir, "other.scenario");
    ok(&[
        "scenario",
        "--stations",
        "6",
        "--peak-factor",
        "2.5",
        "--out",
        s(&other),
    ]);
    let ck = path(&dir, "i.ck");
    ok(&["interpolant", "--field", s(&field), "--out", s(&ck)]);
    let out = stagecast(&[
        "eval",
        "--scenario",
        s(&other),
        "--field",
        s(&field),
        "--checkpoint",
        s(&ck),
        "--out-dir",
        s(&path(&dir, "eval")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    // the matching pair still works
    ok(&[
        "eval",
        "--scenario",
        s(&scenario),
        "--field",
        s(&field),
        "--checkpoint",
        s(&ck),
        "--out-dir",
        s(&path(&dir, "eval")),
    ]);
}

#[test]
fn simulate_is_reproducible_and_lake_at_rest_conserves_volume() {
    let dir = TempDir::new().unwrap();
    let (scenario, field) = flood(&dir);
    let again = path(&dir, "again.field");
    ok(&[
        "simulate",
        "--scenario",
        s(&scenario),
        "--cells",
        "60",
        "--out",
        s(&again),
    ]);
    assert_eq!(fs::read(&field).unwrap(), fs::read(&again).unwrap());

    let lake = path(&dir, "lake.scenario");
    ok(&[
        "scenario",
        "--kind",
        "lake-at-rest",
        "--depth",
        "8",
        "--hours",
        "6",
        "--out",
        s(&lake),
    ]);
    let stdout = ok(&[
        "simulate",
        "--scenario",
        s(&lake),
        "--cells",
        "100",
        "--frictionless",
        "--out",
        s(&path(&dir, "lake.field")),
    ]);
    let line = stdout
        .lines()
        .find(|l| l.starts_with("mass balance error:"))
        .unwrap();
    let value: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(value < 1e-10, "{line}");
}

#[test]
fn training_is_seed_deterministic_and_zero_iterations_is_the_initial_model() {
    let dir = TempDir::new().unwrap();
    let (scenario, field) = flood(&dir);
    let a = train(
        &dir,
        &scenario,
        &field,
        "a.ck",
        &["--iterations", "20", "--seed", "3"],
    );
    let b = train(
        &dir,
        &scenario,
        &field,
        "b.ck",
        &["--iterations", "20", "--seed", "3"],
    );
    assert_eq!(a, b);
    assert_eq!(
        fs::read(path(&dir, "a.ck.history.csv")).unwrap(),
        fs::read(path(&dir, "b.ck.history.csv")).unwrap()
    );
    let c = train(
        &dir,
        &scenario,
        &field,
        "c.ck",
        &["--iterations", "20", "--seed", "4"],
    );
    assert_ne!(a, c);

    let z1 = train(
        &dir,
        &scenario,
        &field,
        "z1.ck",
        &["--iterations", "0", "--seed", "3"],
    );
    let z2 = train(
        &dir,
        &scenario,
        &field,
        "z2.ck",
        &["--iterations", "0", "--seed", "3"],
    );
    assert_eq!(z1, z2);
    assert_ne!(z1, a);
}

#[test]
fn runaway_training_exits_with_the_divergence_code() {
    let dir = TempDir::new().unwrap();
    let (scenario, field) = flood(&dir);
    let ck = path(&dir, "d.ck");
    let mut args = vec![
        "train",
        "--scenario",
        s(&scenario),
        "--field",
        s(&field),
        "--out",
        s(&ck),
    ];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--iterations", "300", "--lr", "10000"]);
    let out = stagecast(&args);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(path(&dir, "d.ck.history.csv").exists());
    assert!(!ck.exists());
}

#[test]
fn interpolant_checkpoint_scores_zero() {
    let dir = TempDir::new().unwrap();
    let (scenario, field) = flood(&dir);
    let ck = path(&dir, "i.ck");
    ok(&["interpolant", "--field", s(&field), "--out", s(&ck)]);
    let out_dir = path(&dir, "eval");
    let stdout = ok(&[
        "eval",
        "--scenario",
        s(&scenario),
        "--field",
        s(&field),
        "--checkpoint",
        s(&ck),
        "--out-dir",
        s(&out_dir),
        "--collocation",
        "200",
    ]);
    assert!(stdout.contains("overall MRAE: 0\n"), "{stdout}");
    for f in ["report.csv", "summary.json", "timing.json", "histogram.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"datum\": \"depth\""), "{summary}");
    assert!(!summary.contains("seconds"));
}

#[test]
fn benchmark_writes_its_tables() {
    let dir = TempDir::new().unwrap();
    let (scenario, field) = flood(&dir);
    let ck = train(&dir, &scenario, &field, "a.ck", &["--iterations", "0"]);
    assert!(!ck.is_empty());
    let out_dir = path(&dir, "bench");
    let stdout = ok(&[
        "benchmark",
        "--scenario",
        s(&scenario),
        "--checkpoint",
        s(&path(&dir, "a.ck")),
        "--cells",
        "60",
        "--out-dir",
        s(&out_dir),
    ]);
    assert!(stdout.contains("speedup:"));
    assert!(out_dir.join("benchmark.csv").exists());
    assert!(out_dir.join("benchmark.json").exists());
    let out = stagecast(&[
        "benchmark",
        "--scenario",
        s(&scenario),
        "--checkpoint",
        s(&path(&dir, "a.ck")),
        "--repetitions",
        "2",
        "--out-dir",
        s(&out_dir),
    ]);
    assert!(!out.status.success());
}

#[test]
fn ablate_writes_one_directory_per_configuration() {
    let dir = TempDir::new().unwrap();
    let scenario = path(&dir, "pulse.scenario");
    let field = path(&dir, "pulse.field");
    ok(&[
        "scenario",
        "--kind",
        "sharp-pulse",
        "--stations",
        "6",
        "--out",
        s(&scenario),
    ]);
    ok(&[
        "simulate",
        "--scenario",
        s(&scenario),
        "--cells",
        "60",
        "--out",
        s(&field),
    ]);
    let out_dir = path(&dir, "ablation");
    let mut args = vec![
        "ablate",
        "--scenario",
        s(&scenario),
        "--field",
        s(&field),
        "--out-dir",
        s(&out_dir),
        "--station",
        "2",
        "--iterations",
        "20",
        "--seed",
        "9",
    ];
    args.extend_from_slice(TINY);
    ok(&args);
    let summary = fs::read_to_string(out_dir.join("ablation.json")).unwrap();
    assert!(summary.contains("\"seed\": 9"), "{summary}");
    for name in ["base", "fourier_only", "full"] {
        let sub = out_dir.join(name);
        let config = fs::read_to_string(sub.join("config.json")).unwrap();
        assert!(config.contains("\"seed\": 9"), "{config}");
        assert!(sub.join("history.csv").exists());
    }
}
