//! Run configuration: a versioned JSON document overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use whitebox_core::regressor::{
    LossConfig, LossMode, ModelShape, Optimizer, RegressorMode, TrainConfig, DEFAULT_EMA_ALPHA,
};
use whitebox_core::synth::DEFAULT_CLIP_THRESHOLD;
use whitebox_core::{FilterKind, FilterPipeline};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub pipeline: FilterPipeline,
    pub model: Option<PathBuf>,
    pub seed: u64,
    pub mode: RegressorMode,
    pub loss: LossMode,
    /// Dynamic reweighting of staged losses.
    pub dynamic: bool,
    pub mu: f64,
    pub alpha: f64,
    pub out: PathBuf,
    pub clip_threshold: f64,
    pub train: TrainSettings,
    pub fit: FitSettings,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let loss = LossConfig::default();
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            pipeline: FilterPipeline::default_six(),
            model: None,
            seed: 0,
            mode: RegressorMode::default(),
            loss: loss.mode,
            dynamic: loss.dynamic,
            mu: loss.mu,
            alpha: DEFAULT_EMA_ALPHA,
            out: PathBuf::from("out"),
            clip_threshold: DEFAULT_CLIP_THRESHOLD,
            train: TrainSettings::default(),
            fit: FitSettings::default(),
            synth: SynthSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub optimizer: Optimizer,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub embed_dim: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            optimizer: t.optimizer,
            lr: t.lr,
            steps: t.steps,
            batch_size: t.batch_size,
            hidden: t.shape.hidden,
            embed_dim: t.shape.embed_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub steps: usize,
    pub lr: f64,
    pub rounds: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.5,
            rounds: 150,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    /// Composites generated per natural image.
    pub per_image: usize,
    /// Side length of procedural scenes.
    pub size: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            per_image: 1,
            size: 64,
        }
    }
}

/// Flag values that replace the corresponding configuration fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub pipeline: Option<String>,
    pub model: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub mode: Option<RegressorMode>,
    pub loss: Option<LossMode>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Optional config file, then flags on top.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        config.apply(overrides)?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(p) = &o.pipeline {
            self.pipeline = parse_pipeline(p)?;
        }
        if let Some(m) = &o.model {
            self.model = Some(m.clone());
        }
        if let Some(a) = o.alpha {
            self.alpha = a;
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(l) = o.loss {
            self.loss = l;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            bail!(
                "config schema version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            bail!("alpha {} outside (0, 1]", self.alpha);
        }
        if !(0.0..=1.0).contains(&self.clip_threshold) {
            bail!("clip threshold {} outside [0, 1]", self.clip_threshold);
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            mode: self.loss,
            dynamic: self.dynamic,
            mu: self.mu,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            pipeline: self.pipeline.clone(),
            mode: self.mode,
            loss: self.loss_config(),
            lr: self.train.lr,
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            seed: self.seed,
            optimizer: self.train.optimizer,
            shape: ModelShape {
                hidden: self.train.hidden,
                embed_dim: self.train.embed_dim,
                ..ModelShape::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn model_path(&self) -> Result<&Path> {
        match &self.model {
            Some(p) => Ok(p),
            None => bail!("no model given (use --model or the config's \"model\" field)"),
        }
    }
}

/// Accepts a bare filter list (`["brightness","contrast"]`) or a full
/// pipeline document with `filters` and optional `priors`.
pub fn parse_pipeline(text: &str) -> Result<FilterPipeline> {
    if text.trim_start().starts_with('[') {
        let kinds: Vec<FilterKind> =
            serde_json::from_str(text).context("invalid --pipeline filter list")?;
        Ok(FilterPipeline::new(kinds)?)
    } else {
        serde_json::from_str(text).context("invalid --pipeline document")
    }
}
