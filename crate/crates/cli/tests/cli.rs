//! End-to-end run of the binary: dataset -> train -> attack -> report.

use std::path::Path;
use std::process::Command;

fn gapfinder() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gapfinder"))
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).expect("utf-8 output")
}

#[test]
fn full_pipeline_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let weights = dir.path().join("model.wcgf");
    let out = dir.path().join("attack");

    run_ok(gapfinder().args([
        "dataset",
        "--out",
        data.to_str().unwrap(),
        "--mode",
        "biased",
        "--n",
        "40",
        "--side",
        "32",
        "--seed",
        "7",
    ]));
    assert!(data.join("labels.csv").exists());
    assert!(data.join("img_00000.ppm").exists());
    assert!(data.join("img_00000.mask.pgm").exists());

    run_ok(gapfinder().args([
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        weights.to_str().unwrap(),
        "--epochs",
        "2",
        "--lr",
        "0.05",
        "--batch",
        "8",
        "--seed",
        "7",
    ]));
    assert!(weights.exists());

    // Change spec against the first image's glyph mask; the relative mask
    // path resolves against the spec file's directory.
    let spec_path = dir.path().join("change.json");
    let mask_rel = "data/img_00000.mask.pgm";
    std::fs::write(
        &spec_path,
        format!(
            r#"{{
  "mask": "{mask_rel}",
  "channels": ["R"],
  "step_epsilon": 0.01,
  "target_class": 1,
  "max_iterations": 3,
  "plateau_window": 2,
  "description": "fill color must not decide the class"
}}"#
        ),
    )
    .unwrap();

    let stdout = run_ok(gapfinder().args([
        "attack",
        "--model",
        weights.to_str().unwrap(),
        "--image",
        data.join("img_00000.ppm").to_str().unwrap(),
        "--spec",
        spec_path.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert!(stdout.contains("VERDICT:"), "{stdout}");
    assert!(stdout.contains("elapsed:"), "{stdout}");
    for artifact in ["iter_0000.ppm", "worst.ppm", "trace.csv", "report.txt", "report.json"] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("index,target_prob,original_class_prob,loss_to_target\n"));

    let text = run_ok(gapfinder().args([
        "report",
        "--trace",
        out.to_str().unwrap(),
        "--format",
        "text",
    ]));
    assert!(text.contains("VERDICT:"));
    assert!(!text.contains("elapsed"));

    let csv = run_ok(gapfinder().args([
        "report",
        "--trace",
        out.to_str().unwrap(),
        "--format",
        "csv",
    ]));
    assert!(csv.lines().count() >= 5);
    assert!(csv.lines().last().unwrap().starts_with("summary,"));
}

#[test]
fn attack_with_missing_model_fails_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("attack");
    let status = gapfinder()
        .args([
            "attack",
            "--model",
            dir.path().join("absent.wcgf").to_str().unwrap(),
            "--image",
            dir.path().join("absent.ppm").to_str().unwrap(),
            "--spec",
            dir.path().join("absent.json").to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(!out.join("report.txt").exists());
}

#[test]
fn dataset_rejects_odd_n() {
    let dir = tempfile::tempdir().unwrap();
    let status = gapfinder()
        .args([
            "dataset",
            "--out",
            dir.path().join("d").to_str().unwrap(),
            "--mode",
            "balanced",
            "--n",
            "7",
        ])
        .output()
        .unwrap();
    assert!(!status.status.success());
}

#[test]
fn deterministic_attack_artifacts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let weights = dir.path().join("model.wcgf");

    run_ok(gapfinder().args([
        "dataset",
        "--out",
        data.to_str().unwrap(),
        "--mode",
        "balanced",
        "--n",
        "16",
        "--seed",
        "3",
    ]));
    run_ok(gapfinder().args([
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        weights.to_str().unwrap(),
        "--epochs",
        "1",
        "--lr",
        "0.02",
        "--batch",
        "4",
    ]));

    let spec_path = dir.path().join("change.json");
    std::fs::write(
        &spec_path,
        format!(
            r#"{{
  "mask": "{}",
  "channels": ["R", "G"],
  "step_epsilon": 0.02,
  "target_class": 1,
  "max_iterations": 2,
  "plateau_window": 1,
  "description": "determinism probe"
}}"#,
            data.join("img_00001.mask.pgm").display()
        ),
    )
    .unwrap();

    let run = |out: &Path| {
        run_ok(gapfinder().args([
            "attack",
            "--model",
            weights.to_str().unwrap(),
            "--image",
            data.join("img_00001.ppm").to_str().unwrap(),
            "--spec",
            spec_path.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]));
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run(&out_a);
    run(&out_b);
    for artifact in ["trace.csv", "report.txt", "report.json", "worst.ppm"] {
        let a = std::fs::read(out_a.join(artifact)).unwrap();
        let b = std::fs::read(out_b.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }
}
