use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hsifuse::simdata::{load_cube, save_cube, synthetic_cube, HsiCube};

fn hsifuse(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hsifuse"));
    for a in args {
        cmd.arg(a);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_cube(dir: &Path, name: &str, cube: &HsiCube) -> PathBuf {
    let p = dir.join(name);
    save_cube(cube, &p).unwrap();
    p
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

/// A dataset of `n` 16×16×4 scenes at scale 4.
fn dataset(dir: &Path, n: usize) -> PathBuf {
    let data = dir.join("data");
    for k in 0..n {
        let input = write_cube(dir, &format!("scene{k}.cube"), &synthetic_cube(16, 16, 4, k as u64).unwrap());
        ok(hsifuse(&[&"simulate", &"--patch", &"16", &"--input", &input, &"--out", &data]));
    }
    data
}

#[test]
fn simulate_one_cube_writes_a_triple_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_cube(tmp.path(), "gt.cube", &synthetic_cube(64, 64, 31, 0).unwrap());
    let out = tmp.path().join("sim");
    ok(hsifuse(&[&"simulate", &"--input", &input, &"--out", &out]));
    assert_eq!(files(&out), ["gt_0000_gt.cube", "gt_0000_lr.cube", "gt_0000_msi.cube", "manifest.json"]);
    assert_eq!(load_cube(&out.join("gt_0000_lr.cube")).unwrap().shape(), (16, 16, 31));
    assert_eq!(load_cube(&out.join("gt_0000_msi.cube")).unwrap().shape(), (64, 64, 3));

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["inputs"][0]["sha1"].as_str().unwrap().len(), 40);
}

#[test]
fn stride_controls_the_patch_count() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_cube(tmp.path(), "big.cube", &synthetic_cube(128, 128, 4, 1).unwrap());
    let out = tmp.path().join("sim");
    ok(hsifuse(&[&"simulate", &"--stride", &"32", &"--input", &input, &"--out", &out]));
    // (128 − 64) / 32 + 1 = 3 positions per axis
    assert_eq!(files(&out).iter().filter(|f| f.ends_with("_gt.cube")).count(), 9);
}

#[test]
fn simulate_failures_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let odd = write_cube(tmp.path(), "odd.cube", &synthetic_cube(63, 63, 4, 2).unwrap());
    let out = tmp.path().join("sim");
    let r = hsifuse(&[&"simulate", &"--scale", &"4", &"--input", &odd, &"--out", &out]);
    assert_eq!(code(&r), 3, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("divisible"));

    assert_eq!(code(&hsifuse(&[&"simulate", &"--input", &tmp.path().join("missing.cube"), &"--out", &out])), 2);

    let srf = tmp.path().join("bad.srf");
    std::fs::write(&srf, "red green\n0.5 -1\n").unwrap();
    let good = write_cube(tmp.path(), "good.cube", &synthetic_cube(16, 16, 1, 2).unwrap());
    assert_eq!(code(&hsifuse(&[&"simulate", &"--patch", &"16", &"--srf", &srf, &"--input", &good, &"--out", &out])), 3);

    assert_eq!(code(&hsifuse(&[&"simulate", &"--out", &out])), 1);
    assert_eq!(code(&hsifuse(&[&"bogus"])), 1);
    assert_eq!(code(&hsifuse(&[&"--help"])), 0);
}

#[test]
fn loaded_srf_sets_the_msi_bands() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_cube(tmp.path(), "c.cube", &synthetic_cube(16, 16, 4, 3).unwrap());
    let srf = tmp.path().join("pan.srf");
    std::fs::write(&srf, "# panchromatic\npan, nir\n1, 0\n1, 0\n1, 1\n1, 1\n").unwrap();
    let out = tmp.path().join("sim");
    ok(hsifuse(&[&"simulate", &"--patch", &"16", &"--srf", &srf, &"--input", &input, &"--out", &out]));
    let msi = load_cube(&out.join("c_0000_msi.cube")).unwrap();
    let gt = load_cube(&out.join("c_0000_gt.cube")).unwrap();
    assert_eq!(msi.bands(), 2);
    let mean = gt.pixel(5, 5).iter().sum::<f64>() / 4.0;
    assert!((msi.get(5, 5, 0) - mean).abs() < 1e-12);
}

#[test]
fn test_fraction_splits_into_subdirectories() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_cube(tmp.path(), "c.cube", &synthetic_cube(64, 64, 4, 4).unwrap());
    let out = tmp.path().join("sim");
    ok(hsifuse(&[&"simulate", &"--patch", &"16", &"--test-frac", &"0.25", &"--input", &input, &"--out", &out]));
    let count = |d: &str| files(&out.join(d)).iter().filter(|f| f.ends_with("_gt.cube")).count();
    assert_eq!((count("train"), count("test")), (12, 4));
}

#[test]
fn zero_epochs_write_the_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 1);
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[model]\nd1 = 4\nd2 = 4\nc = 4\n").unwrap();
    let out = tmp.path().join("run");
    let stdout = ok(hsifuse(&[&"train", &"--epochs", &"0", &"--config", &cfg, &"--data", &data, &"--out", &out]));
    assert!(stdout.contains("initialization"));
    assert_eq!(std::fs::read_to_string(out.join("loss.csv")).unwrap(), "step,loss\n");
    let params = hsifuse::network::ModelParams::load(&out.join("model.ckpt")).unwrap();
    let arch =
        hsifuse::network::Architecture::new(4, 3, hsifuse::fusion::FusionConfig { d1: 4, d2: 4, c: 4, ..Default::default() });
    assert_eq!(params.to_bytes(), hsifuse::network::ModelParams::init(&arch, 0).unwrap().to_bytes());
}

#[test]
fn conflicting_flags_report_both_values() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 1);
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[train]\nlr = 0.01\n").unwrap();
    let r = hsifuse(&[&"train", &"--lr", &"0.001", &"--config", &cfg, &"--data", &data, &"--out", &tmp.path().join("o")]);
    assert_eq!(code(&r), 3);
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("0.01") && err.contains("0.001"), "{err}");
}

#[test]
fn periodic_checkpoints_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 2);
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[train]\ncheckpoint_every = 2\n[model]\nd1 = 4\nd2 = 4\nc = 4\n").unwrap();
    let out = tmp.path().join("run");
    ok(hsifuse(&[&"train", &"--epochs", &"2", &"--seed", &"3", &"--config", &cfg, &"--data", &data, &"--out", &out]));
    assert!(out.join("model_step000002.ckpt").is_file() && out.join("model_step000004.ckpt").is_file());
    assert_eq!(std::fs::read(out.join("model_step000004.ckpt")).unwrap(), std::fs::read(out.join("model.ckpt")).unwrap());

    // replay the recorded command line and compare every recorded output hash
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["train"]["epochs"], 2);
    let argv: Vec<String> = manifest["argv"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let recorded: Vec<String> =
        manifest["outputs"].as_array().unwrap().iter().map(|o| o["sha1"].as_str().unwrap().to_string()).collect();
    std::fs::remove_dir_all(&out).unwrap();
    let status = Command::new(&argv[0]).args(&argv[1..]).status().unwrap();
    assert!(status.success());
    let replay: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let again: Vec<String> =
        replay["outputs"].as_array().unwrap().iter().map(|o| o["sha1"].as_str().unwrap().to_string()).collect();
    assert_eq!(recorded, again);
}

#[test]
fn eval_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 2);
    let base = tmp.path().join("base");
    let text = ok(hsifuse(&[&"eval", &"--baseline", &"bicubic", &"--data", &data, &"--out", &base]));
    assert!(text.contains("mean±std"));
    let csv = std::fs::read_to_string(base.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("image,PSNR,SAM,ERGAS,SSIM"));
    assert!(csv.contains("scene0_0000") && csv.contains("scene1_0000"));

    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[model]\nd1 = 4\nd2 = 4\nc = 4\n").unwrap();
    let run = tmp.path().join("run");
    ok(hsifuse(&[&"train", &"--epochs", &"1", &"--config", &cfg, &"--data", &data, &"--out", &run]));
    let ev = tmp.path().join("ev");
    let ckpt = run.join("model.ckpt");
    let text = ok(hsifuse(&[
        &"eval",
        &"--checkpoint",
        &ckpt,
        &"--save-fused",
        &"--pgm-band",
        &"2",
        &"--profile",
        &"3,4",
        &"--data",
        &data,
        &"--out",
        &ev,
    ]));
    assert!(text.contains("params: "));
    let profile = std::fs::read_to_string(ev.join("profile_scene0_0000.csv")).unwrap();
    assert_eq!(profile.lines().next().unwrap(), "band,pred,gt,bicubic");
    assert_eq!(profile.lines().count(), 5);
    assert_eq!(load_cube(&ev.join("scene1_0000_pred.cube")).unwrap().shape(), (16, 16, 4));
    assert!(std::fs::read(ev.join("scene0_0000_gt_b2.pgm")).unwrap().starts_with(b"P5\n16 16\n255\n"));

    assert_eq!(code(&hsifuse(&[&"eval", &"--data", &data, &"--out", &ev])), 1);
    assert_eq!(code(&hsifuse(&[&"eval", &"--checkpoint", &ckpt, &"--profile", &"99,0", &"--data", &data, &"--out", &ev])), 3);
}

#[test]
fn eval_rejects_a_mismatched_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 1);
    let arch =
        hsifuse::network::Architecture::new(7, 3, hsifuse::fusion::FusionConfig { d1: 4, d2: 4, c: 4, ..Default::default() });
    let ckpt = tmp.path().join("other.ckpt");
    hsifuse::network::ModelParams::init(&arch, 0).unwrap().save(&ckpt).unwrap();
    let r = hsifuse(&[&"eval", &"--checkpoint", &ckpt, &"--data", &data, &"--out", &tmp.path().join("ev")]);
    assert_eq!(code(&r), 3);
    assert!(String::from_utf8_lossy(&r.stderr).contains("checkpoint does not match"));
}

#[test]
fn profile_on_single_pixel_cubes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let lr = HsiCube::new(1, 1, 2, vec![0.25, 0.5]).unwrap();
    let msi = HsiCube::new(1, 1, 1, vec![0.4]).unwrap();
    for (part, cube) in [("lr", &lr), ("msi", &msi), ("gt", &lr)] {
        write_cube(&data, &format!("px_{part}.cube"), cube);
    }
    let out = tmp.path().join("ev");
    ok(hsifuse(&[&"eval", &"--baseline", &"bicubic", &"--profile", &"0,0", &"--data", &data, &"--out", &out]));
    assert_eq!(std::fs::read_to_string(out.join("profile_px.csv")).unwrap(), "band,pred,gt\n0,0.25,0.25\n1,0.5,0.5\n");
}

#[test]
fn ablate_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 1);
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[model]\nd1 = 4\nd2 = 4\nc = 4\n").unwrap();
    for (axis, rows) in [("rel_coord", 2), ("upsampler", 4)] {
        let out = tmp.path().join(axis);
        ok(hsifuse(&[&"ablate", &"--axis", &axis, &"--epochs", &"1", &"--config", &cfg, &"--data", &data, &"--out", &out]));
        let csv = std::fs::read_to_string(out.join(format!("ablation_{axis}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), rows + 1, "{csv}");
    }
    let out = tmp.path().join("wm");
    ok(hsifuse(&[
        &"ablate",
        &"--axis",
        &"weight_mode",
        &"--epochs",
        &"1",
        &"--config",
        &cfg,
        &"--data",
        &data,
        &"--test",
        &data,
        &"--out",
        &out,
    ]));
    assert!(std::fs::read_to_string(out.join("ablation_weight_mode.txt")).unwrap().contains("note:"));
    assert_eq!(code(&hsifuse(&[&"ablate", &"--axis", &"nope", &"--data", &data, &"--out", &out])), 1);
}
