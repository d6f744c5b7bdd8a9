//! Frame-by-frame harmonization with EMA-smoothed arguments.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use whitebox_core::regressor::{apply_args, predict_args, EmaState, RegressorModel};
use whitebox_core::{ArgVector, FilterPipeline, Image, Mask};

use crate::io::{load_image, load_mask, save_image};

/// Raw and smoothed arguments of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameLog {
    pub frame: usize,
    pub theta: ArgVector,
    pub smoothed: ArgVector,
}

/// Sequential harmonizer carrying the EMA state between frames.
pub struct VideoHarmonizer<'a> {
    model: &'a RegressorModel,
    pipeline: &'a FilterPipeline,
    ema: EmaState,
    next: usize,
}

impl<'a> VideoHarmonizer<'a> {
    pub fn new(model: &'a RegressorModel, pipeline: &'a FilterPipeline, alpha: f64) -> Result<Self> {
        Ok(Self {
            model,
            pipeline,
            ema: EmaState::new(alpha)?,
            next: 0,
        })
    }

    pub fn frame(&mut self, frame: &Image, mask: &Mask) -> Result<(Image, FrameLog)> {
        let theta = predict_args(frame, mask, self.model, self.pipeline)?;
        let smoothed = self.ema.push(&theta)?.clone();
        let out = apply_args(frame, mask, self.pipeline, &smoothed)?;
        let log = FrameLog {
            frame: self.next,
            theta,
            smoothed,
        };
        self.next += 1;
        Ok((out, log))
    }
}

pub fn run_video(
    frames: &[Image],
    masks: &[Mask],
    model: &RegressorModel,
    pipeline: &FilterPipeline,
    alpha: f64,
) -> Result<(Vec<Image>, Vec<FrameLog>)> {
    check_counts(frames.len(), masks.len())?;
    let mut h = VideoHarmonizer::new(model, pipeline, alpha)?;
    let mut outs = Vec::with_capacity(frames.len());
    let mut logs = Vec::with_capacity(frames.len());
    for (f, m) in frames.iter().zip(masks) {
        let (o, l) = h.frame(f, m)?;
        outs.push(o);
        logs.push(l);
    }
    Ok((outs, logs))
}

/// Streams frames from disk, writing each output into `out_dir` under its
/// input file name and the argument log to `out_dir/args.json`.
pub fn run_video_files(
    frames: &[PathBuf],
    masks: &[PathBuf],
    model: &RegressorModel,
    pipeline: &FilterPipeline,
    alpha: f64,
    out_dir: &Path,
) -> Result<Vec<FrameLog>> {
    check_counts(frames.len(), masks.len())?;
    let mut h = VideoHarmonizer::new(model, pipeline, alpha)?;
    let mut logs = Vec::with_capacity(frames.len());
    for (fp, mp) in frames.iter().zip(masks) {
        let (out, log) = h
            .frame(&load_image(fp)?, &load_mask(mp)?)
            .with_context(|| format!("frame {}", fp.display()))?;
        let name = fp.file_name().context("frame path has no file name")?;
        save_image(&out, &out_dir.join(name).with_extension("png"))?;
        logs.push(log);
    }
    let log_path = out_dir.join("args.json");
    std::fs::write(&log_path, serde_json::to_string_pretty(&logs)?)
        .with_context(|| format!("cannot write {}", log_path.display()))?;
    Ok(logs)
}

fn check_counts(frames: usize, masks: usize) -> Result<()> {
    if frames == 0 {
        bail!("video needs at least one frame");
    }
    if frames != masks {
        bail!("{frames} frames but {masks} masks");
    }
    Ok(())
}
