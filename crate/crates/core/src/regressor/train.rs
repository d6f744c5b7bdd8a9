//! Training by backpropagation through the filter pipeline.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::image::Image;
use crate::pipeline::{stage_sq_error_gradients, stage_sq_errors, ArgVector, FilterPipeline};
use crate::regressor::features::{model_features, FeatureVector};
use crate::regressor::loss::{LossConfig, LossReport};
use crate::regressor::model::{ForwardCache, ModelShape, RegressorMode, RegressorModel};
use crate::synth::CompositeSample;

pub const TRAIN_SCHEMA_VERSION: u32 = 1;

/// A synthetic sample with its (fixed) regressor input precomputed.
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub sample: CompositeSample,
    pub features: FeatureVector,
}

impl TrainingExample {
    pub fn new(sample: CompositeSample) -> Result<Self> {
        let features = model_features(&sample.composite, &sample.mask)?;
        Ok(Self { sample, features })
    }
}

/// Forward pass of one sample: regressor outputs and `L_0..=L_k` (with
/// `L_0 = 0`).
struct SampleForward {
    cache: ForwardCache,
    args: ArgVector,
    losses: Vec<f64>,
}

fn forward_sample(
    model: &RegressorModel,
    example: &TrainingExample,
    pipeline: &FilterPipeline,
) -> Result<SampleForward> {
    let k = pipeline.len();
    if model.k() != k {
        return Err(domain!("model has {} heads, pipeline {k} filters", model.k()));
    }
    let s = &example.sample;
    s.mask.ensure_nonempty("training sample")?;
    if s.stage_targets.len() != k + 1 {
        return Err(domain!("{} stage targets for {k} filters", s.stage_targets.len()));
    }
    let cache = model.forward(&example.features)?;
    let args = cache.args();
    let targets: Vec<Option<&Image>> = s.stage_targets[1..].iter().map(Some).collect();
    let norm = 3.0 * s.mask.weight();
    let mut losses = vec![0.0];
    losses.extend(
        stage_sq_errors(&s.composite, pipeline, &args, &targets, &s.mask)
            .into_iter()
            .map(|e| e / norm),
    );
    Ok(SampleForward { cache, args, losses })
}

/// Weight gradient given `∂total/∂L_i` for `i = 1..=k`.
fn backward_sample(
    model: &RegressorModel,
    example: &TrainingExample,
    pipeline: &FilterPipeline,
    forward: &SampleForward,
    d_stage: &[f64],
) -> Result<RegressorModel> {
    let s = &example.sample;
    let norm = 3.0 * s.mask.weight();
    let targets: Vec<Option<&Image>> = s.stage_targets[1..].iter().map(Some).collect();
    let weights: Vec<f64> = d_stage.iter().map(|d| d / norm).collect();
    let d_theta =
        stage_sq_error_gradients(&s.composite, pipeline, &forward.args, &targets, &weights, &s.mask);
    model.backward(&forward.cache, &d_theta)
}

/// Loss report and weight gradient for one sample.
pub fn sample_gradient(
    model: &RegressorModel,
    example: &TrainingExample,
    pipeline: &FilterPipeline,
    loss: &LossConfig,
) -> Result<(LossReport, RegressorModel)> {
    let f = forward_sample(model, example, pipeline)?;
    let (report, d_stage) = loss.evaluate(&f.losses)?;
    let grad = backward_sample(model, example, pipeline, &f, &d_stage)?;
    Ok((report, grad))
}

/// Loss report and weight gradient of the batch loss.
///
/// Each sample's loss is evaluated on its own stage losses (so the dynamic
/// denominator is per sample); report and gradient are batch means. `step`
/// only labels a divergence error.
pub fn batch_gradient(
    model: &RegressorModel,
    batch: &[&TrainingExample],
    pipeline: &FilterPipeline,
    loss: &LossConfig,
    step: usize,
) -> Result<(LossReport, RegressorModel)> {
    if batch.is_empty() {
        return Err(domain!("empty training batch"));
    }
    let w = 1.0 / batch.len() as f64;
    let mut grad = RegressorModel::zeros(model.mode, model.k(), model.shape);
    let mut mean: Option<LossReport> = None;
    for ex in batch {
        let f = forward_sample(model, ex, pipeline)?;
        let (report, d_stage) = loss.evaluate(&f.losses)?;
        grad.add_scaled(w, &backward_sample(model, ex, pipeline, &f, &d_stage)?);
        match &mut mean {
            None => mean = Some(scale_report(report, w)),
            Some(m) => accumulate_report(m, &report, w),
        }
    }
    let report = mean.expect("non-empty batch");
    if !report.total.is_finite() {
        return Err(Error::Training {
            step,
            loss: report.total,
        });
    }
    if grad.params().any(|g| !g.is_finite()) {
        return Err(Error::Training {
            step,
            loss: f64::NAN,
        });
    }
    Ok((report, grad))
}

/// One plain gradient-descent update on the batch-mean loss.
pub fn train_step(
    model: &mut RegressorModel,
    batch: &[&TrainingExample],
    pipeline: &FilterPipeline,
    lr: f64,
    loss: &LossConfig,
    step: usize,
) -> Result<LossReport> {
    let (report, grad) = batch_gradient(model, batch, pipeline, loss, step)?;
    model.add_scaled(-lr, &grad);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Fixed-step gradient descent.
    Sgd,
    /// Adam with β = (0.9, 0.999), ε = 1e-8.
    #[default]
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            _ => Err(domain!("unknown optimizer {s:?}")),
        }
    }
}

/// Moment estimates for Adam, laid out like the model they update.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(model: &RegressorModel) -> Self {
        let n = model.param_count();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn update(&mut self, model: &mut RegressorModel, grad: &RegressorModel, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((w, g), m), v) in model
            .params_mut()
            .zip(grad.params())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn scale_report(mut r: LossReport, s: f64) -> LossReport {
    r.stage.iter_mut().for_each(|v| *v *= s);
    r.reweighted.iter_mut().for_each(|v| *v *= s);
    r.total *= s;
    r
}

fn accumulate_report(into: &mut LossReport, r: &LossReport, s: f64) {
    for (a, b) in into.stage.iter_mut().zip(&r.stage) {
        *a += s * b;
    }
    for (a, b) in into.reweighted.iter_mut().zip(&r.reweighted) {
        *a += s * b;
    }
    into.total += s * r.total;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub pipeline: FilterPipeline,
    pub mode: RegressorMode,
    pub loss: LossConfig,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub shape: ModelShape,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schema_version: TRAIN_SCHEMA_VERSION,
            pipeline: FilterPipeline::default_six(),
            mode: RegressorMode::Cascade,
            loss: LossConfig::default(),
            lr: 1e-3,
            steps: 2000,
            batch_size: 16,
            seed: 0,
            optimizer: Optimizer::default(),
            shape: ModelShape::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != TRAIN_SCHEMA_VERSION {
            return Err(domain!(
                "training config schema version {} (expected {TRAIN_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(domain!("learning rate {} must be finite and >= 0", self.lr));
        }
        if self.batch_size == 0 {
            return Err(domain!("batch size must be positive"));
        }
        if !(self.loss.mu > 0.0) {
            return Err(domain!("mu must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RegressorModel,
    /// Batch-mean total loss after every step.
    pub history: Vec<f64>,
}

/// Trains a freshly initialized model with shuffled mini-batches.
pub fn train(config: &TrainConfig, examples: &[TrainingExample]) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.is_empty() {
        return Err(domain!("no training examples"));
    }
    let k = config.pipeline.len();
    let mut model = RegressorModel::init(config.mode, k, config.shape, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let mut history = Vec::with_capacity(config.steps);
    let mut adam = match config.optimizer {
        Optimizer::Adam => Some(AdamState::new(&model)),
        Optimizer::Sgd => None,
    };
    for step in 0..config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size.min(examples.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&examples[order[cursor]]);
            cursor += 1;
        }
        let (report, grad) = batch_gradient(&model, &batch, &config.pipeline, &config.loss, step)?;
        match &mut adam {
            Some(state) => state.update(&mut model, &grad, config.lr),
            None => model.add_scaled(-config.lr, &grad),
        }
        history.push(report.total);
    }
    Ok(TrainOutcome { model, history })
}
