//! Drives the installed binary end to end: the full artifact chain in a
//! scratch directory, the exit-code contract, and seed reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sparsect::pipeline::{Method, QualityReport, SplitManifest};
use tempfile::tempdir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparsect"))
}

/// Tiny config that keeps every stage under a second or two. Half of the
/// 24 test phantoms carry lesions, enough pairs for the saliency stage.
fn write_config(dir: &Path) -> PathBuf {
    let out = dir.join("run");
    let text = format!(
        r#"{{
  "phantom_size": 32,
  "reference_views": 128,
  "view_ladder": [64, 16, 8],
  "methods": ["fbp", "tv", "unet"],
  "n_train": 12,
  "n_val": 6,
  "n_test": 24,
  "lesion_fraction": 0.5,
  "seed": 21,
  "tv_grid": {{ "lo": 0.05, "hi": 0.2, "step": 0.05 }},
  "tv_sweep_pairs": 6,
  "unet": {{ "base_channels": 4, "depth": 2, "epochs": 2, "batch": 4, "lr": 0.001 }},
  "detector": {{ "channels": [4, 8], "epochs": 2, "batch": 6 }},
  "timing": {{ "repeats": 1, "images": 1 }},
  "output_dir": {out:?}
}}"#
    );
    let path = dir.join("cfg.json");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(cfg: &Path, args: &[&str]) {
    let out = bin()
        .arg("--config")
        .arg(cfg)
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}:\n{}{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn exit_code(mut cmd: Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let mut cmd = bin();
        cmd.arg(flag);
        assert_eq!(exit_code(cmd), 0, "{flag}");
    }
    let mut sub = bin();
    sub.args(["recon", "--help"]);
    assert_eq!(exit_code(sub), 0, "subcommand help");
}

#[test]
fn the_full_artifact_chain_runs_in_a_scratch_directory() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = dir.path().join("run");

    run_ok(&cfg, &["gen"]);
    let manifest: SplitManifest =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    manifest.validate_disjoint().unwrap();
    assert_eq!(manifest.train.len(), 12);
    assert_eq!(manifest.test.len(), 24);

    let sino = run.join("sino16.bin");
    let fbp = run.join("fbp16.bin");
    run_ok(&cfg, &["project", "--views", "16", "--output", sino.to_str().unwrap()]);
    run_ok(&cfg, &[
        "recon",
        "--input",
        sino.to_str().unwrap(),
        "--output",
        fbp.to_str().unwrap(),
    ]);
    // 32x32 f64 image plus its preview.
    assert_eq!(fs::metadata(&fbp).unwrap().len(), 32 * 32 * 8);
    assert!(fbp.with_extension("pgm").exists());

    run_ok(&cfg, &["tv-sweep"]);
    run_ok(&cfg, &["train-unet"]);
    run_ok(&cfg, &["train-detector"]);
    run_ok(&cfg, &["eval-quality"]);
    run_ok(&cfg, &["eval-detect"]);
    run_ok(&cfg, &["saliency", "--samples", "12"]);
    run_ok(&cfg, &["time"]);

    for name in [
        "tv_weights.json",
        "unet.bin",
        "detector.bin",
        "quality.json",
        "quality.csv",
        "detect.json",
        "detect_delong.csv",
        "saliency.json",
        "timing.json",
    ] {
        assert!(run.join(name).exists(), "missing {name}");
    }

    // Fewer views must not read better than more views for plain FBP.
    let report =
        QualityReport::from_json_str(&fs::read_to_string(run.join("quality.json")).unwrap())
            .unwrap();
    let ladder: Vec<f64> = [64, 16, 8]
        .iter()
        .map(|&v| report.row(v, Method::Fbp).unwrap().ssim.mean)
        .collect();
    assert!(
        ladder[0] > ladder[1] && ladder[1] > ladder[2],
        "fbp ssim not decreasing: {ladder:?}"
    );
}

#[test]
fn configuration_errors_exit_one_and_runtime_failures_two() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let mut cmd = bin();
    cmd.arg("--config").arg(&bad).arg("gen");
    assert_eq!(exit_code(cmd), 1, "malformed config");

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{ "no_such_field": 3 }"#).unwrap();
    let mut cmd = bin();
    cmd.arg("--config").arg(&unknown).arg("gen");
    assert_eq!(exit_code(cmd), 1, "unknown config field");

    let mut cmd = bin();
    cmd.arg("--no-such-flag");
    assert_eq!(exit_code(cmd), 1, "unknown flag");

    let mut cmd = bin();
    cmd.env("SPARSECT_THREADS", "zero").arg("--config").arg(&cfg).arg("gen");
    assert_eq!(exit_code(cmd), 1, "bad thread count");

    let mut cmd = bin();
    cmd.env("SPARSECT_THREADS", "1").arg("--config").arg(&cfg).arg("gen");
    assert_eq!(exit_code(cmd), 0, "explicit single thread");

    let mut cmd = bin();
    cmd.arg("--config").arg(&cfg).args([
        "recon",
        "--input",
        dir.path().join("missing.bin").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(cmd), 2, "missing sinogram");

    // No trained artifacts on disk yet.
    let mut cmd = bin();
    cmd.arg("--config").arg(&cfg).arg("eval-detect");
    assert_eq!(exit_code(cmd), 2, "missing detector");
}

#[test]
fn the_seed_flag_overrides_the_config() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path());
    let manifest = dir.path().join("run").join("manifest.json");

    run_ok(&cfg, &["gen"]);
    let first = fs::read(&manifest).unwrap();
    run_ok(&cfg, &["gen"]);
    assert_eq!(first, fs::read(&manifest).unwrap(), "same seed, same manifest");

    run_ok(&cfg, &["--seed", "99", "gen"]);
    assert_ne!(first, fs::read(&manifest).unwrap(), "new seed, new manifest");
}
