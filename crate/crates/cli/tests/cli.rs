use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgba, RgbaImage};
use whitebox_cli::commands::SampleRecord;
use whitebox_cli::io::{load_image, load_mask, quantized, save_image, save_mask};
use whitebox_cli::video::run_video;
use whitebox_core::regressor::{harmonize, ModelShape, RegressorMode, RegressorModel};
use whitebox_core::synth::{procedural_scene, SceneConfig};
use whitebox_core::{FilterPipeline, FitResult, Image, Mask};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_whitebox"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{cmd:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn scene(seed: u64) -> (Image, Mask) {
    procedural_scene(SceneConfig { width: 24, height: 20 }, seed).unwrap()
}

fn model(seed: u64) -> RegressorModel {
    RegressorModel::init(RegressorMode::Cascade, 6, ModelShape::default(), seed)
}

#[test]
fn png_and_ppm_round_trip_to_quantized_values() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_fn(7, 5, |x, y| {
        [0.1234 * x as f64 / 7.0, 0.77, (x * y) as f64 / 35.0]
    })
    .unwrap();
    for name in ["a.png", "a.ppm"] {
        let p = dir.path().join(name);
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), quantized(&img));
    }
    let mask = Mask::from_fn(7, 5, |x, _| x as f64 / 6.0).unwrap();
    for name in ["m.png", "m.pgm"] {
        let p = dir.path().join(name);
        save_mask(&mask, &p).unwrap();
        let back = load_mask(&p).unwrap();
        for (a, b) in back.data().iter().zip(mask.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}

#[test]
fn rgba_alpha_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rgba.png");
    let mut buf = RgbaImage::new(2, 1);
    buf.put_pixel(0, 0, Rgba([10, 20, 30, 0]));
    buf.put_pixel(1, 0, Rgba([255, 128, 0, 200]));
    buf.save(&p).unwrap();
    let img = load_image(&p).unwrap();
    assert_eq!(img.pixel(0, 0), [10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
    assert_eq!(img.pixel(1, 0), [1.0, 128.0 / 255.0, 0.0]);
}

#[test]
fn truncated_file_is_an_io_error_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.png");
    save_image(&scene(1).0, &good).unwrap();
    let bytes = std::fs::read(&good).unwrap();
    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    let err = load_image(&bad).unwrap_err();
    assert!(format!("{err:#}").contains("bad.png"), "{err:#}");

    let mask = dir.path().join("mask.png");
    save_mask(&scene(1).1, &mask).unwrap();
    let out = bin()
        .args(["fit", "--composite"])
        .arg(&bad)
        .arg("--mask")
        .arg(&mask)
        .arg("--target")
        .arg(&good)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.png"));
    assert!(out.stdout.is_empty());
}

#[test]
fn video_single_frame_matches_harmonize() {
    let (img, mask) = scene(2);
    let m = model(5);
    let p = FilterPipeline::default_six();
    let (outs, logs) = run_video(&[img.clone()], &[mask.clone()], &m, &p, 0.9).unwrap();
    let (direct, theta) = harmonize(&img, &mask, &m, &p).unwrap();
    assert_eq!(outs[0], direct);
    assert_eq!(logs[0].theta, theta);
    assert_eq!(logs[0].smoothed, theta);
}

#[test]
fn video_repeated_frames_are_identical() {
    let (img, mask) = scene(3);
    let m = model(6);
    let p = FilterPipeline::default_six();
    let frames = vec![img; 5];
    let masks = vec![mask; 5];
    let (outs, logs) = run_video(&frames, &masks, &m, &p, 0.9).unwrap();
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
    assert!(logs.iter().all(|l| l.smoothed == logs[0].theta));
    assert_eq!(logs.iter().map(|l| l.frame).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
}

#[test]
fn video_count_mismatch_is_rejected() {
    let (img, mask) = scene(4);
    let m = model(7);
    let p = FilterPipeline::default_six();
    assert!(run_video(&[img.clone(), img], &[mask], &m, &p, 0.9).is_err());
    assert!(run_video(&[], &[], &m, &p, 0.9).is_err());
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn synth_is_deterministic_and_writes_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(
            bin().args(["synth", "--procedural", "3", "--seed", "11", "--out"]).arg(out),
        );
    }
    let fa = files(&a);
    assert_eq!(fa.len(), 12);
    for (x, y) in fa.iter().zip(files(&b)) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let record: SampleRecord =
        serde_json::from_str(&std::fs::read_to_string(a.join("00002.json")).unwrap()).unwrap();
    assert_eq!(record.seed, 13);
    assert_eq!(record.pipeline, FilterPipeline::default_six());
    assert!(record.clipped_fraction <= 0.05);
}

#[test]
fn end_to_end_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    run_ok(bin().args(["synth", "--procedural", "4", "--out"]).arg(&data));

    let config = d.join("config.json");
    std::fs::write(
        &config,
        r#"{"schema_version": 1, "seed": 3, "train": {"steps": 5, "batch_size": 2}, "fit": {"steps": 20, "rounds": 2}}"#,
    )
    .unwrap();
    let out = run_ok(
        bin().arg("train").arg("--config").arg(&config).arg("--data").arg(&data)
            .arg("--out").arg(d.join("model")),
    );
    let model_path = d.join("model/model.json");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), model_path.display().to_string());
    assert!(d.join("model/history.csv").exists());

    let composite = data.join("00000_composite.png");
    let mask = data.join("00000_mask.png");
    let natural = data.join("00000_natural.png");
    let out = run_ok(
        bin().arg("harmonize").arg("--model").arg(&model_path).arg("--composite").arg(&composite)
            .arg("--mask").arg(&mask).arg("--out").arg(d.join("harm")),
    );
    let theta: Vec<f64> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(theta.len(), 6);
    assert!(d.join("harm/00000_composite.png").exists());

    for method in ["gradient", "coordinate"] {
        let out = run_ok(
            bin().arg("fit").arg("--config").arg(&config).arg("--composite").arg(&composite)
                .arg("--mask").arg(&mask).arg("--target").arg(&natural).args(["--method", method]),
        );
        let r: FitResult = serde_json::from_slice(&out.stdout).unwrap();
        assert!(r.fmse <= r.trace[0].1, "{method}: {} > {}", r.fmse, r.trace[0].1);
    }

    // eval: outputs, truths and masks matched by file stem
    let (outs, truths, masks) = (d.join("eo"), d.join("et"), d.join("em"));
    for dir in [&outs, &truths, &masks] {
        std::fs::create_dir_all(dir).unwrap();
    }
    for id in ["00000", "00001"] {
        std::fs::copy(data.join(format!("{id}_composite.png")), outs.join(format!("{id}.png"))).unwrap();
        std::fs::copy(data.join(format!("{id}_natural.png")), truths.join(format!("{id}.png"))).unwrap();
        std::fs::copy(data.join(format!("{id}_mask.png")), masks.join(format!("{id}.png"))).unwrap();
    }
    run_ok(
        bin().arg("eval").arg("--outputs").arg(&outs).arg("--truths").arg(&truths)
            .arg("--masks").arg(&masks).arg("--out").arg(d.join("eval")),
    );
    let csv = std::fs::read_to_string(d.join("eval/eval.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "id,mse,fmse,psnr");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean,"));

    let (frames, fmasks) = (d.join("frames"), d.join("fmasks"));
    std::fs::create_dir_all(&frames).unwrap();
    std::fs::create_dir_all(&fmasks).unwrap();
    for t in 0..3 {
        std::fs::copy(&composite, frames.join(format!("f{t:03}.png"))).unwrap();
        std::fs::copy(&mask, fmasks.join(format!("f{t:03}.png"))).unwrap();
    }
    run_ok(
        bin().arg("video").arg("--model").arg(&model_path).arg("--frames").arg(&frames)
            .arg("--masks").arg(&fmasks).args(["--alpha", "0.5", "--out"]).arg(d.join("video")),
    );
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("video/args.json")).unwrap()).unwrap();
    assert_eq!(log.as_array().unwrap().len(), 3);
    let first = std::fs::read(d.join("video/f000.png")).unwrap();
    assert_eq!(first, std::fs::read(d.join("video/f002.png")).unwrap());
    assert_eq!(first, std::fs::read(d.join("harm/00000_composite.png")).unwrap());
}

#[test]
fn invalid_flags_fail_cleanly() {
    let out = bin().args(["harmonize", "--composite", "x.png", "--mask", "y.png"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model"));
    let out = bin().args(["synth", "--procedural", "1", "--alpha", "1.5"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["synth", "--procedural", "1", "--mode", "sideways"]).output().unwrap();
    assert!(!out.status.success());
}
