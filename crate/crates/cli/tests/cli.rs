//! End-to-end checks of the binary: subcommand wiring, file outputs, exit
//! codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn patchgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchgraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn synth_into(dir: &Path) {
    let out = patchgraph(&[
        "synth",
        "--images",
        "6",
        "--classes",
        "4",
        "--size",
        "48",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const FAST: &[&str] = &[
    "--iters",
    "25",
    "--patch-resize",
    "8",
    "--embed-dim",
    "8",
    "--images-per-batch",
    "4",
    "--patches-per-image",
    "6",
];

#[test]
fn synth_writes_pairs() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path());
    for k in 0..6 {
        assert!(dir.path().join(format!("image_{k}.ppm")).exists());
        assert!(dir.path().join(format!("label_{k}.pgm")).exists());
    }
    assert!(!dir.path().join("image_6.ppm").exists());
}

#[test]
fn tune_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path());
    let ckpt = dir.path().join("e.ckpt");
    let history = dir.path().join("hist.csv");
    let mut args = vec![
        "tune",
        "--data",
        dir.path().to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        ckpt.to_str().unwrap(),
        "--history",
        history.to_str().unwrap(),
    ];
    args.extend_from_slice(FAST);
    let out = patchgraph(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(ckpt.exists());
    let hist = fs::read_to_string(&history).unwrap();
    assert!(hist.starts_with("iteration,loss,active_fraction"));
    assert_eq!(hist.lines().count(), 26);
    assert!(dir.path().join("tune.svg").exists());

    let mut args = vec![
        "eval",
        "--data",
        dir.path().to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--seed",
        "7",
    ];
    args.extend_from_slice(FAST);
    let out = patchgraph(&args);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("knn_accuracy="), "{stdout}");
}

#[test]
fn compare_emits_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path());
    let csv = dir.path().join("r.csv");
    let mut args = vec![
        "compare",
        "--data",
        dir.path().to_str().unwrap(),
        "--seed",
        "0",
        "--seeds",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ];
    args.extend_from_slice(FAST);
    let out = patchgraph(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let body = fs::read_to_string(&csv).unwrap();
    assert!(body
        .starts_with("seed,arm,triplet_satisfaction,knn_accuracy,intra_inter_ratio,iters,wall_ms"));
    assert_eq!(body.lines().filter(|l| !l.starts_with('#')).count(), 5); // header + 2 seeds x 2 arms
    assert!(body.contains("# summary"));
    assert!(dir.path().join("compare.svg").exists());
}

#[test]
fn sweep_emits_rows_per_target() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path());
    let csv = dir.path().join("s.csv");
    let mut args = vec![
        "sweep",
        "--data",
        dir.path().to_str().unwrap(),
        "--seed",
        "0",
        "--seeds",
        "2",
        "--nodes",
        "12,18",
        "--out",
        csv.to_str().unwrap(),
    ];
    args.extend_from_slice(FAST);
    let out = patchgraph(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let body = fs::read_to_string(&csv).unwrap();
    assert!(body.contains("nodes12"));
    assert!(body.contains("nodes18"));
    assert!(dir.path().join("sweep.svg").exists());
}

#[test]
fn check_exits_zero() {
    let out = patchgraph(&["check"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("ok ")).count(), 4);
}

#[test]
fn exit_codes_follow_failure_class() {
    // unknown flag: usage
    let out = patchgraph(&["--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(1));
    // missing dataset: data error
    let out = patchgraph(&[
        "eval",
        "--data",
        "/nonexistent-dir",
        "--ckpt",
        "/nonexistent-ckpt",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // invalid config values: usage
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path());
    let out = patchgraph(&[
        "tune",
        "--data",
        dir.path().to_str().unwrap(),
        "--seed",
        "1",
        "--scale-min",
        "0.9",
        "--scale-max",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tune_is_reproducible_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path());
    let run = |name: &str| {
        let ckpt = dir.path().join(name);
        let mut args = vec![
            "tune",
            "--data",
            dir.path().to_str().unwrap(),
            "--seed",
            "11",
            "--out",
            ckpt.to_str().unwrap(),
        ];
        args.extend_from_slice(FAST);
        let out = patchgraph(&args);
        assert!(out.status.success());
        fs::read(&ckpt).unwrap()
    };
    assert_eq!(run("a.ckpt"), run("b.ckpt"));
}
