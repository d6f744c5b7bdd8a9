//! Supervised composite synthesis.
//!
//! A natural image is pushed through the pipeline filters in reverse order
//! with randomly sampled arguments; the perturbed foreground is pasted back
//! onto the untouched natural background. Every intermediate image is kept as
//! the target for the corresponding forward stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::filters::BoundFilter;
use crate::image::{Image, Mask};
use crate::pipeline::{composite_output, ArgVector, FilterPipeline, Prior};

/// Default rejection threshold of [`clipping_guard`].
pub const DEFAULT_CLIP_THRESHOLD: f64 = 0.05;

/// Draws one argument per prior from `N(mean, std²)` truncated to `[-1, 1]`
/// by rejection.
pub fn sample_args(priors: &[Prior], seed: u64) -> Result<ArgVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_args_with(priors, &mut rng)
}

pub fn sample_args_with(priors: &[Prior], rng: &mut impl rand::Rng) -> Result<ArgVector> {
    let mut out = Vec::with_capacity(priors.len());
    for p in priors {
        p.validate()?;
        let normal = Normal::new(p.mean, p.std).map_err(|e| domain!("prior {p:?}: {e}"))?;
        let v = loop {
            let v = normal.sample(rng);
            if (-1.0..=1.0).contains(&v) {
                break v;
            }
        };
        out.push(v);
    }
    ArgVector::new(out)
}

#[derive(Clone, Debug)]
pub struct CompositeSample {
    pub natural: Image,
    pub mask: Mask,
    /// Network input: perturbed foreground over the natural background.
    pub composite: Image,
    /// `I_0 ..= I_k`; the last entry is the natural image.
    pub stage_targets: Vec<Image>,
    pub xi: ArgVector,
    /// Foreground components clamped at any generation stage.
    pub clipped_components: usize,
    /// Components under a nonzero mask weight.
    pub foreground_components: usize,
}

impl CompositeSample {
    pub fn clipped_fraction(&self) -> f64 {
        if self.foreground_components == 0 {
            0.0
        } else {
            self.clipped_components as f64 / self.foreground_components as f64
        }
    }
}

pub fn generate_composite(
    natural: &Image,
    mask: &Mask,
    pipeline: &FilterPipeline,
    xi: &ArgVector,
) -> Result<CompositeSample> {
    natural.ensure_mask_dims(mask, "generate_composite")?;
    pipeline.check_args(xi)?;
    let k = pipeline.len();
    let bound: Vec<BoundFilter> = pipeline
        .filters()
        .iter()
        .zip(xi.values())
        .map(|(&kind, &a)| BoundFilter::new(kind, a))
        .collect::<Result<_>>()?;

    let n = natural.pixel_count();
    let mut clipped = vec![false; n * 3];
    let mut targets = vec![natural.clone()];
    for f in bound.iter().rev() {
        let src = targets.last().expect("non-empty");
        let mut data = Vec::with_capacity(n * 3);
        for (i, px) in src.pixels().enumerate() {
            if mask.data()[i] > 0.0 {
                for (c, hit) in f.clamps(px).into_iter().enumerate() {
                    clipped[i * 3 + c] |= hit;
                }
            }
            data.extend_from_slice(&f.apply(px));
        }
        targets.push(Image::from_raw(natural.width(), natural.height(), data));
    }
    targets.reverse();
    debug_assert_eq!(targets.len(), k + 1);

    let composite = composite_output(natural, &targets[0], mask)?;
    let foreground_components = 3 * mask.data().iter().filter(|&&m| m > 0.0).count();
    Ok(CompositeSample {
        natural: natural.clone(),
        mask: mask.clone(),
        composite,
        stage_targets: targets,
        xi: xi.clone(),
        clipped_components: clipped.iter().filter(|&&c| c).count(),
        foreground_components,
    })
}

/// Accepts a sample when at most `threshold` of its foreground components were
/// clamped during generation.
pub fn clipping_guard(sample: &CompositeSample, threshold: f64) -> bool {
    sample.clipped_fraction() <= threshold
}

/// Parameters of the procedural scene generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
}

/// Generates a smooth, textured "natural" image with an elliptical binary
/// foreground mask.
///
/// Foreground and background share one illuminant, tint and texture
/// statistics, so appearance differences between the two regions in a
/// composite are attributable to the synthetic perturbation.
pub fn procedural_scene(config: SceneConfig, seed: u64) -> Result<(Image, Mask)> {
    use rand::Rng;
    let SceneConfig { width, height } = config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let base: f64 = rng.random_range(0.3..0.6);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.08..0.08));
    let amplitude: f64 = rng.random_range(0.05..0.14);
    let chroma: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.6..1.4));

    struct Wave {
        fx: f64,
        fy: f64,
        phase: f64,
    }
    let waves = |rng: &mut ChaCha8Rng| -> Vec<Wave> {
        (0..3)
            .map(|_| Wave {
                fx: rng.random_range(-3.0..3.0),
                fy: rng.random_range(-3.0..3.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect()
    };
    let bg_waves = waves(&mut rng);
    let fg_waves = waves(&mut rng);
    let fg_offset: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.03..0.03));

    let cx = rng.random_range(0.3..0.7) * width as f64;
    let cy = rng.random_range(0.3..0.7) * height as f64;
    let rx = rng.random_range(0.18..0.32) * width as f64;
    let ry = rng.random_range(0.18..0.32) * height as f64;
    let inside = |x: usize, y: usize| {
        let dx = (x as f64 + 0.5 - cx) / rx;
        let dy = (y as f64 + 0.5 - cy) / ry;
        dx * dx + dy * dy <= 1.0
    };

    let texture = |ws: &[Wave], u: f64, v: f64| -> [f64; 3] {
        let t: Vec<f64> = ws
            .iter()
            .map(|w| (std::f64::consts::TAU * (w.fx * u + w.fy * v) + w.phase).sin())
            .collect();
        [
            (t[0] + 0.5 * t[1]) * chroma[0],
            (t[0] + 0.5 * t[2]) * chroma[1],
            (t[0] - 0.3 * t[1] + 0.3 * t[2]) * chroma[2],
        ]
    };

    let image = Image::from_fn(width, height, |x, y| {
        let u = x as f64 / width as f64;
        let v = y as f64 / height as f64;
        let (ws, offset) = if inside(x, y) {
            (&fg_waves, fg_offset)
        } else {
            (&bg_waves, [0.0; 3])
        };
        let t = texture(ws, u, v);
        std::array::from_fn(|c| {
            (base + tint[c] + offset[c] + 0.6 * amplitude * t[c]).clamp(0.03, 0.92)
        })
    })?;
    let mask = Mask::from_fn(width, height, |x, y| if inside(x, y) { 1.0 } else { 0.0 })?;
    if mask.is_empty() {
        return Err(domain!("scene {width}x{height} too small for a foreground"));
    }
    Ok((image, mask))
}

/// Draws arguments until the clipping guard accepts the generated sample.
/// Returns the sample and the number of rejected draws.
pub fn guarded_sample(
    natural: &Image,
    mask: &Mask,
    pipeline: &FilterPipeline,
    clip_threshold: f64,
    seed: u64,
) -> Result<(CompositeSample, usize)> {
    const MAX_ATTEMPTS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a5a5_0000_0001);
    for attempt in 0..MAX_ATTEMPTS {
        let xi = sample_args_with(pipeline.priors(), &mut rng)?;
        let sample = generate_composite(natural, mask, pipeline, &xi)?;
        if clipping_guard(&sample, clip_threshold) {
            return Ok((sample, attempt));
        }
    }
    Err(domain!(
        "no sample within clipping threshold {clip_threshold} after {MAX_ATTEMPTS} draws"
    ))
}

/// [`guarded_sample`] on the procedural scene for `seed`.
pub fn procedural_sample(
    config: SceneConfig,
    pipeline: &FilterPipeline,
    clip_threshold: f64,
    seed: u64,
) -> Result<(CompositeSample, usize)> {
    let (natural, mask) = procedural_scene(config, seed)?;
    guarded_sample(&natural, &mask, pipeline, clip_threshold, seed)
}
