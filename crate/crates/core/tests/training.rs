use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use whitebox_core::metrics::fmse;
use whitebox_core::regressor::{
    apply_args, harmonize, train, train_step, EmaState, LossConfig, LossMode, ModelShape,
    RegressorMode, RegressorModel, TrainConfig, TrainingExample,
};
use whitebox_core::synth::{procedural_sample, procedural_scene, SceneConfig};
use whitebox_core::{ArgVector, FilterPipeline};

fn examples(n: usize, size: usize, base: u64) -> Vec<TrainingExample> {
    let p = FilterPipeline::default_six();
    let cfg = SceneConfig { width: size, height: size };
    (0..n as u64)
        .map(|i| TrainingExample::new(procedural_sample(cfg, &p, 0.05, base + i).unwrap().0).unwrap())
        .collect()
}

#[test]
fn fixed_sample_loss_falls_over_every_50_step_window() {
    let p = FilterPipeline::default_six();
    let staged = LossConfig { dynamic: false, ..LossConfig::default() };
    let last = LossConfig { mode: LossMode::FinalOnly, ..LossConfig::default() };
    for ex in &examples(3, 64, 1) {
        for loss in [&staged, &last] {
            let mut m = RegressorModel::init(RegressorMode::Cascade, 6, ModelShape::default(), 0);
            let h: Vec<f64> = (0..200)
                .map(|s| train_step(&mut m, &[ex], &p, 1e-2, loss, s).unwrap().total)
                .collect();
            for t in 0..150 {
                assert!(h[t + 50] < h[t], "{loss:?}: step {t}: {} -> {}", h[t], h[t + 50]);
            }
        }
    }
}

#[test]
fn ema_reduces_variance_of_iid_stream() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ema = EmaState::new(0.9).unwrap();
    let mut raw = vec![Vec::new(); 3];
    let mut smooth = vec![Vec::new(); 3];
    for _ in 0..1000 {
        let theta = ArgVector::new((0..3).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
        let s = ema.push(&theta).unwrap().clone();
        for c in 0..3 {
            raw[c].push(theta.values()[c]);
            smooth[c].push(s.values()[c]);
        }
    }
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    for c in 0..3 {
        let ratio = var(&smooth[c]) / var(&raw[c]);
        assert!(ratio < 0.95, "coordinate {c}: {ratio}");
        assert!((ratio - 0.9 / 1.1).abs() < 0.1, "coordinate {c}: {ratio}");
    }
}

#[test]
fn same_arguments_are_resolution_independent() {
    let (img, mask) = procedural_scene(SceneConfig { width: 64, height: 48 }, 9).unwrap();
    let p = FilterPipeline::default_six();
    let theta = ArgVector::new(vec![0.2, -0.3, 0.4, -0.1, 0.3, -0.2]).unwrap();
    let low = apply_args(&img, &mask, &p, &theta).unwrap();
    let high = apply_args(
        &img.upsample_nearest(4).unwrap(),
        &mask.upsample_nearest(4).unwrap(),
        &p,
        &theta,
    )
    .unwrap();
    assert_eq!(high.downsample_nearest(4).unwrap(), low);
}

#[test]
fn trained_model_improves_on_the_composite() {
    let train_set = examples(60, 32, 100);
    let test_set = examples(20, 32, 900);
    let cfg = TrainConfig {
        loss: LossConfig { dynamic: false, ..LossConfig::default() },
        steps: 300,
        batch_size: 8,
        seed: 2,
        ..TrainConfig::default()
    };
    let model = train(&cfg, &train_set).unwrap().model;
    let (mut before, mut after) = (0.0, 0.0);
    for ex in &test_set {
        let s = &ex.sample;
        let (out, _) = harmonize(&s.composite, &s.mask, &model, &cfg.pipeline).unwrap();
        before += fmse(&s.composite, &s.natural, &s.mask).unwrap();
        after += fmse(&out, &s.natural, &s.mask).unwrap();
    }
    assert!(after < before, "{after} >= {before}");
}
