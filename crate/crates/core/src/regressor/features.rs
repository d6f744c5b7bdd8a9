//! Handcrafted image-level features of a composite and its mask.
//!
//! Two regions, foreground (weight `m`) and background (weight `1 − m`), each
//! summarized by per-channel means, per-channel standard deviations and a
//! normalized 16-bin luminance histogram. Layout:
//!
//! ```text
//! [ fg mean (3) | fg std (3) | fg hist (16) | bg mean (3) | bg std (3) | bg hist (16) ]
//! ```

use crate::error::Result;
use crate::filters::luminance;
use crate::image::{Image, Mask};

pub const HIST_BINS: usize = 16;
pub const REGION_DIM: usize = 6 + HIST_BINS;
pub const FEATURE_DIM: usize = 2 * REGION_DIM;

/// Side length the composite is resampled to before feature extraction.
pub const WORKING_RESOLUTION: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn foreground(&self) -> &[f64] {
        &self.0[..REGION_DIM]
    }

    pub fn background(&self) -> &[f64] {
        &self.0[REGION_DIM..]
    }
}

#[derive(Default)]
struct RegionAccumulator {
    weight: f64,
    sum: [f64; 3],
    sum_sq: [f64; 3],
    hist: [f64; HIST_BINS],
}

impl RegionAccumulator {
    fn add(&mut self, px: [f64; 3], w: f64) {
        if w == 0.0 {
            return;
        }
        self.weight += w;
        for c in 0..3 {
            self.sum[c] += w * px[c];
            self.sum_sq[c] += w * px[c] * px[c];
        }
        let bin = ((luminance(px) * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
        self.hist[bin] += w;
    }

    fn finish(&self, out: &mut Vec<f64>) {
        let mean = self.sum.map(|s| s / self.weight);
        out.extend_from_slice(&mean);
        for c in 0..3 {
            let var = self.sum_sq[c] / self.weight - mean[c] * mean[c];
            out.push(var.max(0.0).sqrt());
        }
        out.extend(self.hist.iter().map(|h| h / self.weight));
    }
}

/// Region statistics at the image's own resolution.
///
/// When the mask covers the whole image the background half repeats the
/// foreground statistics.
pub fn extract_features(composite: &Image, mask: &Mask) -> Result<FeatureVector> {
    composite.ensure_mask_dims(mask, "extract_features")?;
    mask.ensure_nonempty("extract_features")?;
    let mut fg = RegionAccumulator::default();
    let mut bg = RegionAccumulator::default();
    for (px, &m) in composite.pixels().zip(mask.data()) {
        fg.add(px, m);
        bg.add(px, 1.0 - m);
    }
    let mut out = Vec::with_capacity(FEATURE_DIM);
    fg.finish(&mut out);
    if bg.weight > 0.0 {
        bg.finish(&mut out);
    } else {
        out.extend_from_within(..REGION_DIM);
    }
    Ok(FeatureVector(out))
}

/// Features as the regressor sees them: extracted after bilinear resampling
/// of composite and mask to the working resolution.
///
/// Falls back to full-resolution statistics if resampling erases a tiny
/// foreground.
pub fn model_features(composite: &Image, mask: &Mask) -> Result<FeatureVector> {
    composite.ensure_mask_dims(mask, "model_features")?;
    mask.ensure_nonempty("model_features")?;
    let (w, h) = (WORKING_RESOLUTION, WORKING_RESOLUTION);
    if composite.dims() == (w, h) {
        return extract_features(composite, mask);
    }
    let small_mask = mask.resize_bilinear(w, h)?;
    if small_mask.is_empty() {
        return extract_features(composite, mask);
    }
    extract_features(&composite.resize_bilinear(w, h)?, &small_mask)
}
