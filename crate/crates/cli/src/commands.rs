//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use whitebox_core::metrics::{aggregate, EvalRecord};
use whitebox_core::regressor::{harmonize, train, RegressorModel, TrainingExample};
use whitebox_core::synth::{guarded_sample, procedural_scene, SceneConfig};
use whitebox_core::{
    fit_coordinate, fit_gradient, generate_composite, ArgVector, FilterPipeline, FitResult,
};

use crate::config::RunConfig;
use crate::io::{load_image, load_mask, save_image, save_mask};
use crate::video::run_video_files;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];
const MASK_SUFFIX: &str = "_mask";

/// Sidecar written next to every synthesized sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    /// Natural image file name, or `procedural`.
    pub source: String,
    pub seed: u64,
    pub xi: ArgVector,
    pub pipeline: FilterPipeline,
    pub clipped_fraction: f64,
    pub rejections: usize,
}

impl SampleRecord {
    pub fn composite_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_composite.png", self.id))
    }

    pub fn natural_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_natural.png", self.id))
    }

    pub fn mask_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}{MASK_SUFFIX}.png", self.id))
    }
}

/// Image files in `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .with_context(|| format!("{}: no usable file name", path.display()))
}

/// The file in `files` whose stem equals `name`.
fn find_by_stem<'a>(files: &'a [PathBuf], name: &str) -> Option<&'a PathBuf> {
    files.iter().find(|p| stem(p).is_ok_and(|s| s == name))
}

fn load_model(config: &RunConfig) -> Result<RegressorModel> {
    let path = config.model_path()?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read model {}", path.display()))?;
    let model = RegressorModel::from_json(&text)
        .with_context(|| format!("invalid model {}", path.display()))?;
    if model.k() != config.pipeline.len() {
        bail!(
            "model {} has {} heads but the pipeline has {} filters",
            path.display(),
            model.k(),
            config.pipeline.len()
        );
    }
    Ok(model)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn harmonize_cmd(config: &RunConfig, composite: &Path, mask: &Path) -> Result<ArgVector> {
    let model = load_model(config)?;
    let image = load_image(composite)?;
    let mask = load_mask(mask)?;
    let (out, theta) = harmonize(&image, &mask, &model, &config.pipeline)?;
    save_image(&out, &config.out.join(format!("{}.png", stem(composite)?)))?;
    Ok(theta)
}

/// Synthesizes composites from `input` (natural images with `<name>_mask`
/// companions) or, when `input` is `None`, from `procedural` generated scenes.
pub fn synth_cmd(
    config: &RunConfig,
    input: Option<&Path>,
    procedural: usize,
) -> Result<Vec<SampleRecord>> {
    let sources: Vec<(String, PathBuf, PathBuf)> = match input {
        Some(dir) => {
            let files = list_images(dir)?;
            let mut pairs = Vec::new();
            for f in &files {
                let name = stem(f)?;
                if name.ends_with(MASK_SUFFIX) {
                    continue;
                }
                let m = find_by_stem(&files, &format!("{name}{MASK_SUFFIX}"))
                    .with_context(|| format!("{}: no {name}{MASK_SUFFIX} mask", f.display()))?;
                pairs.push((name, f.clone(), m.clone()));
            }
            if pairs.is_empty() {
                bail!("{}: no natural images", dir.display());
            }
            pairs
        }
        None => Vec::new(),
    };
    let total = if input.is_some() {
        sources.len() * config.synth.per_image
    } else {
        procedural
    };
    if total == 0 {
        bail!("nothing to synthesize");
    }
    let scene = SceneConfig {
        width: config.synth.size,
        height: config.synth.size,
    };
    let mut records = Vec::with_capacity(total);
    for index in 0..total {
        let seed = config.seed.wrapping_add(index as u64);
        let (source, natural, mask) = if input.is_some() {
            let (name, img, m) = &sources[index / config.synth.per_image];
            (name.clone(), load_image(img)?, load_mask(m)?)
        } else {
            let (n, m) = procedural_scene(scene, seed)?;
            ("procedural".to_owned(), n, m)
        };
        let (sample, rejections) =
            guarded_sample(&natural, &mask, &config.pipeline, config.clip_threshold, seed)
                .with_context(|| format!("sample {index} from {source}"))?;
        let record = SampleRecord {
            id: format!("{index:05}"),
            source,
            seed,
            xi: sample.xi.clone(),
            pipeline: config.pipeline.clone(),
            clipped_fraction: sample.clipped_fraction(),
            rejections,
        };
        save_image(&sample.composite, &record.composite_path(&config.out))?;
        save_image(&sample.natural, &record.natural_path(&config.out))?;
        save_mask(&sample.mask, &record.mask_path(&config.out))?;
        write_json(&config.out.join(format!("{}.json", record.id)), &record)?;
        records.push(record);
    }
    Ok(records)
}

/// Rebuilds training examples from a `synth` output directory. Stage targets
/// are regenerated from the stored natural image and arguments.
pub fn load_samples(dir: &Path, pipeline: &FilterPipeline) -> Result<Vec<TrainingExample>> {
    let mut sidecars: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    sidecars.retain(|p| p.extension().is_some_and(|e| e == "json"));
    sidecars.sort();
    let mut out = Vec::new();
    for path in sidecars {
        let text = fs::read_to_string(&path)?;
        let Ok(record) = serde_json::from_str::<SampleRecord>(&text) else {
            continue;
        };
        if &record.pipeline != pipeline {
            bail!("{}: sample pipeline differs from the configured one", path.display());
        }
        let natural = load_image(&record.natural_path(dir))?;
        let mask = load_mask(&record.mask_path(dir))?;
        let sample = generate_composite(&natural, &mask, pipeline, &record.xi)?;
        out.push(TrainingExample::new(sample)?);
    }
    if out.is_empty() {
        bail!("{}: no samples", dir.display());
    }
    Ok(out)
}

pub fn train_cmd(config: &RunConfig, data: Option<&Path>, procedural: usize) -> Result<PathBuf> {
    let examples = match data {
        Some(dir) => load_samples(dir, &config.pipeline)?,
        None => {
            if procedural == 0 {
                bail!("no training data (use --data or --procedural)");
            }
            let scene = SceneConfig {
                width: config.synth.size,
                height: config.synth.size,
            };
            (0..procedural)
                .map(|i| {
                    let seed = config.seed.wrapping_add(i as u64);
                    let (n, m) = procedural_scene(scene, seed)?;
                    let (s, _) =
                        guarded_sample(&n, &m, &config.pipeline, config.clip_threshold, seed)?;
                    Ok(TrainingExample::new(s)?)
                })
                .collect::<Result<_>>()?
        }
    };
    let outcome = train(&config.train_config(), &examples)?;
    let model_path = config.out.join("model.json");
    fs::create_dir_all(&config.out)
        .with_context(|| format!("cannot create {}", config.out.display()))?;
    fs::write(&model_path, outcome.model.to_json()?)
        .with_context(|| format!("cannot write {}", model_path.display()))?;
    let mut w = csv::Writer::from_path(config.out.join("history.csv"))?;
    w.write_record(["step", "loss"])?;
    for (step, loss) in outcome.history.iter().enumerate() {
        w.write_record([step.to_string(), loss.to_string()])?;
    }
    w.flush()?;
    Ok(model_path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FitMethod {
    Gradient,
    Coordinate,
}

pub fn fit_cmd(
    config: &RunConfig,
    composite: &Path,
    mask: &Path,
    target: &Path,
    method: FitMethod,
) -> Result<FitResult> {
    let c = load_image(composite)?;
    let m = load_mask(mask)?;
    let t = load_image(target)?;
    let p = &config.pipeline;
    Ok(match method {
        FitMethod::Gradient => fit_gradient(&c, &m, &t, p, config.fit.steps, config.fit.lr)?,
        FitMethod::Coordinate => fit_coordinate(&c, &m, &t, p, config.fit.rounds)?,
    })
}

/// Scores every output against the ground truth and mask sharing its file
/// stem; writes `eval.csv` (one row per image plus the mean) into the output
/// directory and returns the mean.
pub fn eval_cmd(config: &RunConfig, outputs: &Path, truths: &Path, masks: &Path) -> Result<EvalRecord> {
    let truth_files = list_images(truths)?;
    let mask_files = list_images(masks)?;
    let mut records = Vec::new();
    for out in list_images(outputs)? {
        let name = stem(&out)?;
        let t = find_by_stem(&truth_files, &name)
            .with_context(|| format!("no ground truth for {name}"))?;
        let m = find_by_stem(&mask_files, &name)
            .or_else(|| find_by_stem(&mask_files, &format!("{name}{MASK_SUFFIX}")))
            .with_context(|| format!("no mask for {name}"))?;
        let r = EvalRecord::evaluate(&load_image(&out)?, &load_image(t)?, &load_mask(m)?)
            .with_context(|| format!("evaluating {name}"))?;
        records.push(r.with_id(name));
    }
    let mean = aggregate(&records).context("no outputs to evaluate")?;
    fs::create_dir_all(&config.out)
        .with_context(|| format!("cannot create {}", config.out.display()))?;
    let mut w = csv::Writer::from_path(config.out.join("eval.csv"))?;
    for r in records.iter().chain(std::iter::once(&mean)) {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(mean)
}

pub fn video_cmd(config: &RunConfig, frames: &Path, masks: &Path) -> Result<usize> {
    let model = load_model(config)?;
    let frame_files = list_images(frames)?;
    let mask_files = list_images(masks)?;
    fs::create_dir_all(&config.out)
        .with_context(|| format!("cannot create {}", config.out.display()))?;
    let logs = run_video_files(
        &frame_files,
        &mask_files,
        &model,
        &config.pipeline,
        config.alpha,
        &config.out,
    )?;
    Ok(logs.len())
}
