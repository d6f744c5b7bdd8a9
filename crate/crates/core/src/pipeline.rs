//! Ordered filter pipelines: forward execution with stage traces, reverse-mode
//! argument gradients and final foreground compositing.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::filters::{check_arg, BoundFilter, FilterKind};
use crate::image::{Gradient, Image, Mask};

pub const MAX_FILTERS: usize = 8;
pub const DEFAULT_PRIOR_STD: f64 = 0.2;

/// Gaussian prior `N(mean, std²)` over one filter's synthesis argument.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mean: f64,
    pub std: f64,
}

impl Prior {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        let p = Self { mean, std };
        p.validate()?;
        Ok(p)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.mean) {
            return Err(domain!("prior mean {} outside [-1, 1]", self.mean));
        }
        if !(self.std > 0.0 && self.std <= 1.0) {
            return Err(domain!("prior stddev {} outside (0, 1]", self.std));
        }
        Ok(())
    }
}

impl Default for Prior {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: DEFAULT_PRIOR_STD,
        }
    }
}

#[derive(Deserialize)]
struct PipelineDoc {
    filters: Vec<FilterKind>,
    #[serde(default)]
    priors: Option<Vec<Prior>>,
}

/// Ordered list of distinct filters with one synthesis prior per filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PipelineDoc")]
pub struct FilterPipeline {
    filters: Vec<FilterKind>,
    priors: Vec<Prior>,
}

impl TryFrom<PipelineDoc> for FilterPipeline {
    type Error = crate::Error;

    fn try_from(doc: PipelineDoc) -> Result<Self> {
        match doc.priors {
            Some(priors) => FilterPipeline::with_priors(doc.filters, priors),
            None => FilterPipeline::new(doc.filters),
        }
    }
}

impl FilterPipeline {
    /// Pipeline with default priors `N(0, 0.2²)`.
    pub fn new(filters: Vec<FilterKind>) -> Result<Self> {
        let priors = vec![Prior::default(); filters.len()];
        Self::with_priors(filters, priors)
    }

    pub fn with_priors(filters: Vec<FilterKind>, priors: Vec<Prior>) -> Result<Self> {
        if filters.is_empty() || filters.len() > MAX_FILTERS {
            return Err(domain!(
                "pipeline needs 1..={MAX_FILTERS} filters, got {}",
                filters.len()
            ));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = filters.iter().find(|k| !seen.insert(**k)) {
            return Err(domain!("filter {dup} appears more than once"));
        }
        if priors.len() != filters.len() {
            return Err(domain!(
                "{} priors for {} filters",
                priors.len(),
                filters.len()
            ));
        }
        for p in &priors {
            p.validate()?;
        }
        Ok(Self { filters, priors })
    }

    /// Brightness → contrast → saturation → temperature → highlight → shadow.
    pub fn default_six() -> Self {
        Self::new(FilterKind::ALL.to_vec()).expect("default pipeline is valid")
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn filters(&self) -> &[FilterKind] {
        &self.filters
    }

    pub fn priors(&self) -> &[Prior] {
        &self.priors
    }

    pub(crate) fn check_args(&self, args: &ArgVector) -> Result<()> {
        if args.len() != self.len() {
            return Err(domain!(
                "{} arguments for a {}-filter pipeline",
                args.len(),
                self.len()
            ));
        }
        Ok(())
    }

    fn bind(&self, args: &ArgVector) -> Vec<BoundFilter> {
        self.filters
            .iter()
            .zip(args.values())
            .map(|(&k, &a)| BoundFilter::new_unchecked(k, a))
            .collect()
    }
}

/// One argument per pipeline filter, each in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ArgVector(Vec<f64>);

impl ArgVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            check_arg(v)?;
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    /// Clamps every value into `[-1, 1]`; NaN maps to 0.
    pub fn clamped(values: Vec<f64>) -> Self {
        Self(
            values
                .into_iter()
                .map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ArgVector {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ArgVector::new(v)
    }
}

impl From<ArgVector> for Vec<f64> {
    fn from(a: ArgVector) -> Self {
        a.0
    }
}

/// Input image followed by the output of every pipeline stage.
#[derive(Clone, Debug)]
pub struct StageTrace {
    pub stages: Vec<Image>,
    pub args: ArgVector,
}

impl StageTrace {
    pub fn output(&self) -> &Image {
        self.stages.last().expect("trace holds at least the input")
    }
}

pub fn apply_pipeline(
    image: &Image,
    pipeline: &FilterPipeline,
    args: &ArgVector,
) -> Result<StageTrace> {
    pipeline.check_args(args)?;
    let mut stages = Vec::with_capacity(pipeline.len() + 1);
    stages.push(image.clone());
    for f in pipeline.bind(args) {
        let prev = stages.last().expect("non-empty");
        let next = crate::filters::map_pixels(prev, |px| f.apply(px));
        stages.push(next);
    }
    Ok(StageTrace {
        stages,
        args: args.clone(),
    })
}

/// Runs the pipeline pixel by pixel without keeping intermediate stages.
///
/// Bit-identical to the last stage of [`apply_pipeline`].
pub fn render(image: &Image, pipeline: &FilterPipeline, args: &ArgVector) -> Result<Image> {
    pipeline.check_args(args)?;
    let bound = pipeline.bind(args);
    const TILE: usize = 512;
    let mut data = Vec::with_capacity(image.data().len());
    let mut planes = [[0.0; TILE]; 3];
    // cache-sized planar tiles, one filter at a time
    for tile in image.data().chunks(3 * TILE) {
        let n = tile.len() / 3;
        for (i, px) in tile.chunks_exact(3).enumerate() {
            for c in 0..3 {
                planes[c][i] = px[c];
            }
        }
        let [r, g, b] = &mut planes;
        for f in &bound {
            f.apply_planes(&mut r[..n], &mut g[..n], &mut b[..n]);
        }
        data.extend((0..n).flat_map(|i| [r[i], g[i], b[i]]));
    }
    Ok(Image::from_raw(image.width(), image.height(), data))
}

/// `mask · harmonized + (1 − mask) · original`.
pub fn composite_output(original: &Image, harmonized: &Image, mask: &Mask) -> Result<Image> {
    original.ensure_same_dims(harmonized, "composite_output")?;
    original.ensure_mask_dims(mask, "composite_output")?;
    let mut data = Vec::with_capacity(original.data().len());
    for ((o, h), &m) in original
        .data()
        .chunks_exact(3)
        .zip(harmonized.data().chunks_exact(3))
        .zip(mask.data())
    {
        for c in 0..3 {
            data.push(m * h[c] + (1.0 - m) * o[c]);
        }
    }
    Ok(Image::from_raw(original.width(), original.height(), data))
}

/// Reverse-mode `dL/dθ_i` for a loss that depends on the pipeline stages.
///
/// `upstream[i]` holds `∂L/∂stages[i + 1]`; there are exactly `k` entries.
pub fn pipeline_arg_gradients(
    trace: &StageTrace,
    pipeline: &FilterPipeline,
    upstream: &[Gradient],
) -> Result<Vec<f64>> {
    let k = pipeline.len();
    if trace.stages.len() != k + 1 || trace.args.len() != k {
        return Err(domain!(
            "trace with {} stages and {} args does not fit a {k}-filter pipeline",
            trace.stages.len(),
            trace.args.len()
        ));
    }
    if upstream.len() != k {
        return Err(domain!("{} upstream gradients for {k} stages", upstream.len()));
    }
    let input = &trace.stages[0];
    for (s, g) in trace.stages.iter().zip(upstream) {
        input.ensure_same_dims(s, "pipeline_arg_gradients")?;
        g.ensure_matches(input, "pipeline_arg_gradients")?;
    }

    let bound = pipeline.bind(&trace.args);
    let mut grads = vec![0.0; k];
    let mut carry = vec![0.0; input.data().len()];
    for i in (0..k).rev() {
        for (c, u) in carry.iter_mut().zip(&upstream[i].data) {
            *c += u;
        }
        let f = &bound[i];
        let mut acc = 0.0;
        for (px, g) in trace.stages[i].data().chunks_exact(3).zip(carry.chunks_exact_mut(3)) {
            let p = [px[0], px[1], px[2]];
            let up = [g[0], g[1], g[2]];
            let d = f.arg_grad(p);
            acc += up[0] * d[0] + up[1] * d[1] + up[2] * d[2];
            if i > 0 {
                g.copy_from_slice(&f.input_vjp(p, up));
            }
        }
        grads[i] = acc;
    }
    Ok(grads)
}

/// Per-stage masked squared errors `Σ_p m_p ‖stage_i,p − target_i,p‖²` for
/// `i = 1..=k`, evaluated pixel by pixel without materializing stages.
/// Stages whose target is `None` report 0.
pub(crate) fn stage_sq_errors(
    input: &Image,
    pipeline: &FilterPipeline,
    args: &ArgVector,
    targets: &[Option<&Image>],
    mask: &Mask,
) -> Vec<f64> {
    let bound = pipeline.bind(args);
    let k = bound.len();
    debug_assert_eq!(targets.len(), k);
    let mut errors = vec![0.0; k];
    for (p, (px, &m)) in input.data().chunks_exact(3).zip(mask.data()).enumerate() {
        if m == 0.0 {
            continue;
        }
        let mut cur = [px[0], px[1], px[2]];
        for (i, f) in bound.iter().enumerate() {
            cur = f.apply(cur);
            if let Some(t) = targets[i] {
                let t = &t.data()[p * 3..p * 3 + 3];
                let s: f64 = (0..3).map(|c| (cur[c] - t[c]) * (cur[c] - t[c])).sum();
                errors[i] += m * s;
            }
        }
    }
    errors
}

/// Gradient of `Σ_i weights[i] · Σ_p m_p ‖stage_i,p − target_i,p‖²` with
/// respect to the arguments, fused per pixel. Equivalent to
/// [`pipeline_arg_gradients`] with squared-error upstream gradients.
pub(crate) fn stage_sq_error_gradients(
    input: &Image,
    pipeline: &FilterPipeline,
    args: &ArgVector,
    targets: &[Option<&Image>],
    weights: &[f64],
    mask: &Mask,
) -> Vec<f64> {
    let bound = pipeline.bind(args);
    let k = bound.len();
    debug_assert_eq!(targets.len(), k);
    debug_assert_eq!(weights.len(), k);
    let mut grads = vec![0.0; k];
    let mut stages = vec![[0.0; 3]; k + 1];
    for (p, (px, &m)) in input.data().chunks_exact(3).zip(mask.data()).enumerate() {
        if m == 0.0 {
            continue;
        }
        stages[0] = [px[0], px[1], px[2]];
        for (i, f) in bound.iter().enumerate() {
            stages[i + 1] = f.apply(stages[i]);
        }
        let mut g = [0.0; 3];
        for i in (0..k).rev() {
            if let (Some(t), w) = (targets[i], weights[i]) {
                if w != 0.0 {
                    let t = &t.data()[p * 3..p * 3 + 3];
                    for c in 0..3 {
                        g[c] += 2.0 * w * m * (stages[i + 1][c] - t[c]);
                    }
                }
            }
            let f = &bound[i];
            let d = f.arg_grad(stages[i]);
            grads[i] += g[0] * d[0] + g[1] * d[1] + g[2] * d[2];
            if i > 0 {
                g = f.input_vjp(stages[i], g);
            }
        }
    }
    grads
}
