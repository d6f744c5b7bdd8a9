//! Exponential moving average over per-frame argument vectors.

use crate::error::{domain, Result};
use crate::pipeline::ArgVector;

pub const DEFAULT_EMA_ALPHA: f64 = 0.9;

/// `θ̄ᵗ = (1 − α) θ̄ᵗ⁻¹ + α θᵗ`, seeded with the first frame's arguments.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaState {
    alpha: f64,
    smoothed: Option<ArgVector>,
}

impl EmaState {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(domain!("EMA coefficient {alpha} outside (0, 1]"));
        }
        Ok(Self {
            alpha,
            smoothed: None,
        })
    }

    pub fn with_value(alpha: f64, smoothed: ArgVector) -> Result<Self> {
        let mut s = Self::new(alpha)?;
        s.smoothed = Some(smoothed);
        Ok(s)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn smoothed(&self) -> Option<&ArgVector> {
        self.smoothed.as_ref()
    }

    /// Folds in one frame and returns the smoothed arguments.
    pub fn push(&mut self, theta: &ArgVector) -> Result<&ArgVector> {
        let next = match &self.smoothed {
            None => theta.clone(),
            Some(prev) => {
                if prev.len() != theta.len() {
                    return Err(domain!(
                        "EMA state has {} arguments, frame has {}",
                        prev.len(),
                        theta.len()
                    ));
                }
                let a = self.alpha;
                ArgVector::clamped(
                    prev.values()
                        .iter()
                        .zip(theta.values())
                        .map(|(p, t)| (1.0 - a) * p + a * t)
                        .collect(),
                )
            }
        };
        Ok(self.smoothed.insert(next))
    }
}

pub fn ema_update(state: &EmaState, theta: &ArgVector) -> Result<EmaState> {
    let mut next = state.clone();
    next.push(theta)?;
    Ok(next)
}
