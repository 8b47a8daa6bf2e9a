use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wxlidar::container::{ImageContainer, PHYSICS_CHANNEL};

fn wxlidar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wxlidar")).args(args).output().expect("spawn wxlidar")
}

fn ok(args: &[&str]) -> String {
    let out = wxlidar(args);
    assert!(
        out.status.success(),
        "wxlidar {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One synthetic labeled scene in `dir`.
fn scene(dir: &Path, seed: u64) -> PathBuf {
    ok(&["--out-dir", s(dir), "--seed", &seed.to_string(), "synth"]);
    dir.join(format!("scene_{seed:06}.bin"))
}

fn json_lines(stdout: &str) -> Vec<Value> {
    stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn missing_input_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = wxlidar(&["--out-dir", s(tmp.path()), "project", "does/not/exist.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(wxlidar(&["project", "--no-such-flag", "x.bin"]).status.code(), Some(2));
    assert_eq!(wxlidar(&["augment", "x.bin", "--condition", "hail"]).status.code(), Some(2));
}

#[test]
fn clear_weather_augment_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cloud = scene(tmp.path(), 1);
    let out = wxlidar(&["--out-dir", s(tmp.path()), "augment", s(&cloud), "--format", "labeled", "--condition", "clear"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rain or snow"));
}

#[test]
fn truncated_cloud_exits_2() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("bad.bin");
    std::fs::write(&p, [0u8; 17]).unwrap();
    assert_eq!(wxlidar(&["--out-dir", s(tmp.path()), "project", s(&p)]).status.code(), Some(2));
}

#[test]
fn project_valid_pixels_bounded_and_replay_identical() {
    let tmp = TempDir::new().unwrap();
    let cloud = scene(tmp.path(), 3);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let run = |dir: &Path| ok(&["--out-dir", s(dir), "project", s(&cloud), "--format", "labeled"]);
    let line = &json_lines(&run(&a))[0];
    run(&b);
    assert!(line["n_valid"].as_u64().unwrap() <= line["n_points"].as_u64().unwrap());
    let bytes_a = std::fs::read(a.join("scene_000003.wxri")).unwrap();
    assert_eq!(bytes_a, std::fs::read(b.join("scene_000003.wxri")).unwrap());
    assert!(a.join("project.manifest.toml").exists());
}

#[test]
fn augment_replay_threads_and_manifest_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cloud = scene(tmp.path(), 2);
    let run = |dir: &Path, extra: &[&str]| {
        let mut args = vec!["--out-dir", s(dir)];
        args.extend_from_slice(extra);
        args.extend(["augment", s(&cloud), "--format", "labeled", "--condition", "rain", "--rate", "30"]);
        ok(&args)
    };
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    run(&dirs[0], &["--seed", "7", "--threads", "1"]);
    run(&dirs[1], &["--seed", "7", "--threads", "4"]);
    let manifest = dirs[0].join("augment.manifest.toml");
    run(&dirs[2], &["--config", s(&manifest)]);

    let read = |d: &Path| std::fs::read(d.join("scene_000002_rain.bin")).unwrap();
    let first = read(&dirs[0]);
    assert!(!first.is_empty());
    assert_eq!(first, read(&dirs[1]));
    assert_eq!(first, read(&dirs[2]));

    let other = tmp.path().join("d");
    run(&other, &["--seed", "8"]);
    assert_ne!(first, read(&other));
}

#[test]
fn drop_fraction_non_decreasing_over_rate_sweep() {
    let tmp = TempDir::new().unwrap();
    let cloud = scene(tmp.path(), 4);
    let drops: Vec<f64> = [5, 15, 30]
        .iter()
        .map(|rate| {
            let out = ok(&[
                "--out-dir",
                s(&tmp.path().join(format!("r{rate}"))),
                "--seed",
                "7",
                "augment",
                s(&cloud),
                "--format",
                "labeled",
                "--condition",
                "rain",
                "--rate",
                &rate.to_string(),
            ]);
            json_lines(&out)[0]["drop_fraction"].as_f64().unwrap()
        })
        .collect();
    assert!(drops.windows(2).all(|w| w[0] <= w[1]), "{drops:?}");
}

#[test]
fn batch_mode_uses_distinct_per_frame_seeds() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("src");
    let a = scene(&src, 5);
    std::fs::copy(&a, src.join("copy.bin")).unwrap();
    let out = tmp.path().join("out");
    let pattern = format!("{}/*.bin", s(&src));
    let stdout = ok(&["--out-dir", s(&out), "--seed", "3", "augment", "--batch", &pattern, "--format", "labeled", "--condition", "snow", "--rate", "5"]);
    let reports = json_lines(&stdout);
    assert_eq!(reports.len(), 2);
    assert_ne!(reports[0]["seed"], reports[1]["seed"]);
    assert_ne!(
        std::fs::read(out.join("copy_snow.bin")).unwrap(),
        std::fs::read(out.join("scene_000005_snow.bin")).unwrap()
    );
}

#[test]
fn empty_batch_exits_2() {
    let tmp = TempDir::new().unwrap();
    let pattern = format!("{}/*.bin", s(tmp.path()));
    let out = wxlidar(&["--out-dir", s(tmp.path()), "project", "--batch", &pattern]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn intensity_then_evaluate_then_loss() {
    let tmp = TempDir::new().unwrap();
    let clouds = tmp.path().join("clouds");
    ok(&["--out-dir", s(&clouds), "--seed", "10", "synth", "--count", "2"]);
    let stacks = tmp.path().join("stacks");
    let pattern = format!("{}/*.bin", s(&clouds));
    ok(&["--out-dir", s(&stacks), "project", "--batch", &pattern, "--format", "labeled"]);
    let phys = tmp.path().join("phys");
    let pattern = format!("{}/*.wxri", s(&stacks));
    ok(&["--out-dir", s(&phys), "intensity", "--batch", &pattern, "--condition", "clear"]);

    let stack_file = phys.join("scene_000010.wxri");
    let c = ImageContainer::read(&stack_file).unwrap();
    let aw = c.channel(PHYSICS_CHANNEL).unwrap();
    let mask = c.mask().unwrap();
    let max = aw.as_slice().iter().cloned().fold(0.0, f64::max);
    assert!((max - 1.0).abs() < 1e-6);
    for (v, m) in aw.as_slice().iter().zip(&mask) {
        assert!((0.0..=1.0).contains(v));
        if !m {
            assert_eq!(*v, 0.0);
        }
    }

    let eval = tmp.path().join("eval");
    ok(&["--out-dir", s(&eval), "evaluate", s(&stacks), s(&stacks)]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    assert!(report["metrics"]["kl"]["value"].as_f64().unwrap().abs() <= 1e-12);
    assert!((report["metrics"]["ssim"]["value"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    assert!(eval.join("error_hist.csv").exists());

    // The physics channel exported as a generated frame has zero physics loss.
    let generated = tmp.path().join("gen.wxri");
    ImageContainer::single("intensity", &aw).write(&generated).unwrap();
    let stdout = ok(&["--out-dir", s(tmp.path()), "loss", "--generated", s(&generated), "--target", s(&stack_file)]);
    let loss: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(loss["physics"].as_f64().unwrap() < 1e-6);
    assert!(loss["cycle"].is_null());
}
