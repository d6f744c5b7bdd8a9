//! Harmonization quality metrics on the 0–255 scale.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::image::{Image, Mask};

/// PSNR reported for (near-)identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

const PEAK_SQ: f64 = 255.0 * 255.0;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b, "mse")?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = 255.0 * (x - y);
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Mask-weighted MSE normalized by `3 · Σ mask`.
pub fn fmse(a: &Image, b: &Image, mask: &Mask) -> Result<f64> {
    a.ensure_same_dims(b, "fmse")?;
    a.ensure_mask_dims(mask, "fmse")?;
    mask.ensure_nonempty("fmse")?;
    let mut sum = 0.0;
    for ((pa, pb), &m) in a
        .data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .zip(mask.data())
    {
        // component order matches `mse`: a unit mask reproduces it bit for bit
        for c in 0..3 {
            let d = 255.0 * (pa[c] - pb[c]);
            sum += m * (d * d);
        }
    }
    Ok(sum / (3.0 * mask.weight()))
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < PEAK_SQ * 10f64.powf(-PSNR_CAP_DB / 10.0) {
        PSNR_CAP_DB
    } else {
        10.0 * (PEAK_SQ / mse).log10()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub mse: f64,
    pub fmse: f64,
    pub psnr: f64,
}

impl EvalRecord {
    pub fn evaluate(output: &Image, truth: &Image, mask: &Mask) -> Result<Self> {
        let mse = mse(output, truth)?;
        Ok(Self {
            id: None,
            mse,
            fmse: fmse(output, truth, mask)?,
            psnr: psnr_from_mse(mse),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }
}

/// Arithmetic means of every metric, accumulated in input order.
pub fn aggregate(records: &[EvalRecord]) -> Result<EvalRecord> {
    if records.is_empty() {
        return Err(domain!("cannot aggregate zero records"));
    }
    let n = records.len() as f64;
    let (mut m, mut f, mut p) = (0.0, 0.0, 0.0);
    for r in records {
        m += r.mse;
        f += r.fmse;
        p += r.psnr;
    }
    Ok(EvalRecord {
        id: Some("mean".into()),
        mse: m / n,
        fmse: f / n,
        psnr: p / n,
    })
}
