//! Stage losses and the dynamic per-stage reweighting.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
#[cfg(test)]
use crate::image::Gradient;
use crate::image::{Image, Mask};
use crate::pipeline::StageTrace;

/// Floor on the reweighting denominator.
pub const DENOMINATOR_EPS: f64 = 1e-8;
pub const DEFAULT_MU: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Supervise every stage output against its synthesis intermediate.
    #[default]
    Staged,
    /// Supervise only the final output; for composites without intermediates.
    FinalOnly,
}

impl std::str::FromStr for LossMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "staged" => Ok(Self::Staged),
            "final" | "final_only" => Ok(Self::FinalOnly),
            _ => Err(domain!("unknown loss mode {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub mode: LossMode,
    /// Apply the dynamic reweighting to staged losses; otherwise stage
    /// losses are summed as they are.
    pub dynamic: bool,
    pub mu: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            mode: LossMode::Staged,
            dynamic: true,
            mu: DEFAULT_MU,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// `L_0 ..= L_k`, with `L_0` pinned to 0.
    pub stage: Vec<f64>,
    /// `L̃_1 ..= L̃_k`.
    pub reweighted: Vec<f64>,
    pub mu: f64,
    pub total: f64,
}

/// Masked mean squared error of every stage against its target, 0–1 scale.
pub fn stage_losses(trace: &StageTrace, targets: &[Image], mask: &Mask) -> Result<Vec<f64>> {
    if trace.stages.len() != targets.len() {
        return Err(domain!(
            "{} stages but {} targets",
            trace.stages.len(),
            targets.len()
        ));
    }
    mask.ensure_nonempty("stage_losses")?;
    let norm = 3.0 * mask.weight();
    trace
        .stages
        .iter()
        .zip(targets)
        .map(|(s, t)| {
            s.ensure_same_dims(t, "stage_losses")?;
            s.ensure_mask_dims(mask, "stage_losses")?;
            Ok(masked_sq_error(s, t, mask) / norm)
        })
        .collect()
}

pub(crate) fn masked_sq_error(a: &Image, b: &Image, mask: &Mask) -> f64 {
    a.data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .zip(mask.data())
        .map(|((p, q), &m)| {
            let s: f64 = (0..3).map(|c| (p[c] - q[c]) * (p[c] - q[c])).sum();
            m * s
        })
        .sum()
}

/// `scale · ∂L/∂stage` for a single stage loss.
#[cfg(test)]
pub(crate) fn stage_loss_gradient(
    stage: &Image,
    target: &Image,
    mask: &Mask,
    scale: f64,
) -> Gradient {
    let k = scale * 2.0 / (3.0 * mask.weight());
    let mut g = Gradient::zeros_like(stage);
    for (((out, s), t), &m) in g
        .data
        .chunks_exact_mut(3)
        .zip(stage.data().chunks_exact(3))
        .zip(target.data().chunks_exact(3))
        .zip(mask.data())
    {
        for c in 0..3 {
            out[c] = k * m * (s[c] - t[c]);
        }
    }
    g
}

/// `L̃_i = max((L_i − L_{i−1}) / max(L_k, ε), 0)` for `i = 1..=k`.
pub fn dynamic_reweight(losses: &[f64]) -> Result<Vec<f64>> {
    check_losses(losses)?;
    let denom = denominator(losses);
    Ok(losses
        .windows(2)
        .map(|w| ((w[1] - w[0]) / denom).max(0.0))
        .collect())
}

pub fn total_loss(reweighted: &[f64], mu: f64) -> f64 {
    debug_assert!(mu > 0.0);
    mu * reweighted.iter().sum::<f64>()
}

fn check_losses(losses: &[f64]) -> Result<()> {
    if losses.len() < 2 {
        return Err(domain!("need L_0 and at least one stage loss"));
    }
    if let Some(l) = losses.iter().find(|l| !(**l >= 0.0)) {
        return Err(domain!("stage loss {l} is negative or NaN"));
    }
    Ok(())
}

fn denominator(losses: &[f64]) -> f64 {
    losses.last().copied().unwrap_or(0.0).max(DENOMINATOR_EPS)
}

impl LossConfig {
    /// Builds the report for stage losses `L_0..=L_k` (with `L_0` replaced by
    /// 0) and returns `∂total/∂L_i` for `i = 1..=k`, treating the dynamic
    /// denominator as a constant.
    pub fn evaluate(&self, losses: &[f64]) -> Result<(LossReport, Vec<f64>)> {
        check_losses(losses)?;
        self.evaluate_with_denominator(losses, denominator(losses))
    }

    /// As [`evaluate`](Self::evaluate) with the dynamic denominator given.
    pub fn evaluate_with_denominator(&self, losses: &[f64], denom: f64) -> Result<(LossReport, Vec<f64>)> {
        check_losses(losses)?;
        if !(self.mu > 0.0) {
            return Err(domain!("loss scale mu must be positive, got {}", self.mu));
        }
        let mut stage = losses.to_vec();
        stage[0] = 0.0;
        let k = stage.len() - 1;
        let mu = self.mu;
        let (reweighted, d_stage) = match (self.mode, self.dynamic) {
            (LossMode::FinalOnly, _) => {
                let mut r = vec![0.0; k];
                r[k - 1] = stage[k];
                let mut d = vec![0.0; k];
                d[k - 1] = mu;
                (r, d)
            }
            (LossMode::Staged, false) => (stage[1..].to_vec(), vec![mu; k]),
            (LossMode::Staged, true) => {
                let r: Vec<f64> = stage.windows(2).map(|w| ((w[1] - w[0]) / denom).max(0.0)).collect();
                let active: Vec<f64> = stage
                    .windows(2)
                    .map(|w| if w[1] > w[0] { 1.0 } else { 0.0 })
                    .collect();
                let d = (0..k)
                    .map(|i| {
                        let next = active.get(i + 1).copied().unwrap_or(0.0);
                        mu * (active[i] - next) / denom
                    })
                    .collect();
                (r, d)
            }
        };
        let total = total_loss(&reweighted, mu);
        Ok((
            LossReport {
                stage,
                reweighted,
                mu,
                total,
            },
            d_stage,
        ))
    }
}
