//! End-to-end CLI behavior on the toy configuration: artifact layout,
//! reproducibility, exit codes, and the documented output formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_crossreg")
}

fn toy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Full toy pipeline in one temp dir; returns the out dir.
fn toy_pipeline(dir: &Path) -> PathBuf {
    let out = dir.join("run");
    let cfg = path_str(&toy_config());
    let o = path_str(&out);
    run_ok(&["--config", &cfg, "--out", &o, "synth"]);
    run_ok(&[
        "--config",
        &cfg,
        "--out",
        &o,
        "sample",
        "--cloud-a",
        &format!("{o}/cloud_a.xyz"),
        "--cloud-b",
        &format!("{o}/cloud_b.xyz"),
        "--ground-truth",
        &format!("{o}/ground_truth.txt"),
    ]);
    run_ok(&[
        "--config",
        &cfg,
        "--out",
        &o,
        "train",
        "--dataset",
        &format!("{o}/dataset"),
    ]);
    out
}

#[test]
fn synth_writes_three_data_files_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path_str(&toy_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    // Output directories are created on demand.
    for o in [&a, &b] {
        run_ok(&["--config", &cfg, "--out", &path_str(o), "synth"]);
    }
    for name in ["cloud_a.xyz", "cloud_b.xyz", "ground_truth.txt"] {
        let fa = std::fs::read(a.join(name)).unwrap();
        let fb = std::fs::read(b.join(name)).unwrap();
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{name} differs between identical runs");
    }
    // The run records its effective config.
    assert!(a.join("effective_config.toml").exists());
}

#[test]
fn train_reduces_loss_and_register_closes_the_loop() {
    let dir = tempfile::tempdir().unwrap();
    let out = toy_pipeline(dir.path());
    let o = path_str(&out);
    let cfg = path_str(&toy_config());

    // Loss CSV: final epoch loss under a tenth of the first.
    let loss = std::fs::read_to_string(out.join("loss_history.csv")).unwrap();
    let rows: Vec<&str> = loss.lines().skip(1).collect();
    assert_eq!(rows.len(), 30);
    let field = |row: &str| -> f64 { row.split(',').nth(1).unwrap().parse().unwrap() };
    let first = field(rows[0]);
    let last = field(rows[rows.len() - 1]);
    assert!(
        last < 0.1 * first,
        "training did not converge: first {first}, last {last}"
    );

    // Register source onto itself: summary must report full overlap.
    let reg_out = run_ok(&[
        "--config",
        &cfg,
        "--out",
        &o,
        "register",
        "--source",
        &format!("{o}/cloud_a.xyz"),
        "--target",
        &format!("{o}/cloud_a.xyz"),
        "--weights",
        &format!("{o}/weights.bin"),
    ]);
    let stdout = String::from_utf8_lossy(&reg_out.stdout);
    assert!(
        stdout.contains("overlap_ratio=1 "),
        "summary line: {stdout}"
    );
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.starts_with("overlap_ratio=1 "));
    for name in ["transform.txt", "inliers.csv", "aligned.xyz"] {
        assert!(out.join(name).exists(), "{name} missing");
    }

    // Rotation sweep: 72 data rows, first row is the 0-degree control with
    // recall exactly 1.
    run_ok(&[
        "--config",
        &cfg,
        "--out",
        &o,
        "sweep",
        "rotation",
        "--cloud",
        &format!("{o}/cloud_a.xyz"),
        "--weights",
        &format!("{o}/weights.bin"),
    ]);
    let sweep = std::fs::read_to_string(out.join("rotation_sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next(), Some("angle_deg,recall"));
    let data: Vec<&str> = lines.collect();
    assert_eq!(data.len(), 72);
    assert_eq!(data[0], "0,1");
}

#[test]
fn reruns_and_thread_counts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path_str(&toy_config());
    let mut digests: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for (sub, threads) in [("t1", "1"), ("t1_again", "1"), ("t2", "2")] {
        let out = dir.path().join(sub);
        let o = path_str(&out);
        run_ok(&["--config", &cfg, "--out", &o, "--threads", threads, "synth"]);
        run_ok(&[
            "--config",
            &cfg,
            "--out",
            &o,
            "--threads",
            threads,
            "sample",
            "--cloud-a",
            &format!("{o}/cloud_a.xyz"),
            "--cloud-b",
            &format!("{o}/cloud_b.xyz"),
            "--ground-truth",
            &format!("{o}/ground_truth.txt"),
        ]);
        run_ok(&[
            "--config",
            &cfg,
            "--out",
            &o,
            "--threads",
            threads,
            "train",
            "--dataset",
            &format!("{o}/dataset"),
        ]);
        let mut files = vec![
            ("cloud_a.xyz".to_string(), std::fs::read(out.join("cloud_a.xyz")).unwrap()),
            ("weights.bin".to_string(), std::fs::read(out.join("weights.bin")).unwrap()),
            (
                "loss_history.csv".to_string(),
                std::fs::read(out.join("loss_history.csv")).unwrap(),
            ),
            (
                "dataset/index.txt".to_string(),
                std::fs::read(out.join("dataset/index.txt")).unwrap(),
            ),
        ];
        files.sort();
        digests.push(files);
    }
    assert_eq!(digests[0], digests[1], "rerun with same threads differs");
    assert_eq!(digests[0], digests[2], "different thread count differs");
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let o = path_str(&dir.path().join("out"));

    // Usage error: unknown flag.
    assert_eq!(run(&["--no-such-flag"]).status.code(), Some(1));
    // Usage error: missing subcommand.
    assert_eq!(run(&["--out", &o]).status.code(), Some(1));
    // Config error: malformed config file names the field.
    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "no_such_field = 1\n").unwrap();
    let out = run(&["--config", &path_str(&bad_cfg), "--out", &o, "synth"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_field"));
    // Data error: missing input file.
    let out = run(&[
        "--out",
        &o,
        "register",
        "--source",
        "/nonexistent.xyz",
        "--target",
        "/nonexistent.xyz",
        "--weights",
        "/nonexistent.bin",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // Success.
    assert_eq!(run(&["--dump-defaults"]).status.code(), Some(0));
}

#[test]
fn dump_defaults_prints_parseable_config() {
    let out = run_ok(&["--dump-defaults"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[train]"));
    assert!(text.contains("margin = 1.0"));
}
