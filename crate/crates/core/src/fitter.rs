//! Direct per-image argument fitting against a known target.
//!
//! Two independent routes minimize the final-stage masked MSE starting from
//! the identity θ = 0: projected gradient descent driven by the pipeline's
//! reverse-mode gradients, and derivative-free cyclic golden-section search.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::image::{Image, Mask};
use crate::pipeline::{
    render, stage_sq_error_gradients, stage_sq_errors, ArgVector, FilterPipeline,
};
use crate::regressor::loss::masked_sq_error;

/// Shrink iterations per golden-section coordinate visit.
pub const GOLDEN_ITERATIONS: usize = 24;

const SCALE_255: f64 = 255.0 * 255.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub args: ArgVector,
    /// Foreground MSE of the fitted pipeline output, 0–255 scale.
    pub fmse: f64,
    /// `(step, fMSE)`; one entry per gradient step or per coordinate round.
    pub trace: Vec<(usize, f64)>,
}

struct Problem<'a> {
    composite: &'a Image,
    mask: &'a Mask,
    target: &'a Image,
    pipeline: &'a FilterPipeline,
    norm: f64,
}

impl<'a> Problem<'a> {
    fn new(
        composite: &'a Image,
        mask: &'a Mask,
        target: &'a Image,
        pipeline: &'a FilterPipeline,
    ) -> Result<Self> {
        composite.ensure_same_dims(target, "fit")?;
        composite.ensure_mask_dims(mask, "fit")?;
        mask.ensure_nonempty("fit")?;
        Ok(Self {
            composite,
            mask,
            target,
            pipeline,
            norm: 3.0 * mask.weight(),
        })
    }

    /// fMSE on the 0–255 scale.
    fn fmse(&self, theta: &[f64]) -> Result<f64> {
        let out = render(self.composite, self.pipeline, &ArgVector::new(theta.to_vec())?)?;
        Ok(SCALE_255 * masked_sq_error(&out, self.target, self.mask) / self.norm)
    }
}

/// Accelerated projected gradient descent from the identity.
///
/// Steps use Nesterov momentum on the final-stage masked MSE. Momentum is
/// reset whenever the loss rises, and the step size halves when a plain
/// gradient step right after a reset still overshoots. The best evaluated arguments are returned.
pub fn fit_gradient(
    composite: &Image,
    mask: &Mask,
    target: &Image,
    pipeline: &FilterPipeline,
    steps: usize,
    lr: f64,
) -> Result<FitResult> {
    if steps == 0 {
        return Err(domain!("fit_gradient needs at least one step"));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(domain!("learning rate must be positive, got {lr}"));
    }
    let problem = Problem::new(composite, mask, target, pipeline)?;
    let k = pipeline.len();
    let mut targets = vec![None; k];
    targets[k - 1] = Some(target);
    let mut weights = vec![0.0; k];
    weights[k - 1] = 1.0 / problem.norm;

    let mut step_size = lr;
    let mut x = vec![0.0; k];
    let mut x_prev = x.clone();
    let mut t = 1.0_f64;
    let mut last = f64::INFINITY;
    let mut since_reset = 0;
    let mut best = (f64::INFINITY, x.clone());
    let mut trace = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let beta = (t - 1.0) / (0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()));
        let y = ArgVector::clamped(
            x.iter().zip(&x_prev).map(|(a, b)| a + beta * (a - b)).collect(),
        );
        let loss = stage_sq_errors(composite, pipeline, &y, &targets, mask)[k - 1] / problem.norm;
        if !loss.is_finite() {
            return Err(Error::Optimization { step, loss });
        }
        trace.push((step, SCALE_255 * loss));
        if loss < best.0 {
            best = (loss, y.values().to_vec());
        }
        if loss > last {
            if since_reset <= 1 {
                step_size *= 0.5;
            }
            since_reset = 0;
            t = 1.0;
            last = f64::INFINITY;
            x = best.1.clone();
            x_prev = x.clone();
            continue;
        }
        last = loss;
        since_reset += 1;
        let grad = stage_sq_error_gradients(composite, pipeline, &y, &targets, &weights, mask);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Optimization { step, loss: f64::NAN });
        }
        let x_new = ArgVector::clamped(
            y.values().iter().zip(&grad).map(|(v, g)| v - step_size * g).collect(),
        )
        .into_inner();
        x_prev = std::mem::replace(&mut x, x_new);
        t = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
    }
    let final_fmse = problem.fmse(&x)?;
    let (args, fmse) = if final_fmse <= SCALE_255 * best.0 {
        (x, final_fmse)
    } else {
        let f = problem.fmse(&best.1)?;
        (best.1, f)
    };
    trace.push((steps, fmse));
    Ok(FitResult {
        args: ArgVector::new(args)?,
        fmse,
        trace,
    })
}

pub fn fit_coordinate(
    composite: &Image,
    mask: &Mask,
    target: &Image,
    pipeline: &FilterPipeline,
    rounds: usize,
) -> Result<FitResult> {
    if rounds == 0 {
        return Err(domain!("fit_coordinate needs at least one round"));
    }
    let problem = Problem::new(composite, mask, target, pipeline)?;
    let mut theta = vec![0.0; pipeline.len()];
    let mut best = problem.fmse(&theta)?;
    let mut trace = vec![(0, best)];
    for round in 1..=rounds {
        for i in 0..theta.len() {
            let mut probe = theta.clone();
            let mut err = None;
            let (x, fx) = golden_section_minimize(
                |x| {
                    probe[i] = x;
                    problem.fmse(&probe).unwrap_or_else(|e| {
                        err = Some(e);
                        f64::INFINITY
                    })
                },
                -1.0,
                1.0,
                GOLDEN_ITERATIONS,
            );
            if let Some(e) = err {
                return Err(e);
            }
            if fx <= best {
                theta[i] = x;
                best = fx;
            }
        }
        trace.push((round, best));
    }
    Ok(FitResult {
        args: ArgVector::new(theta)?,
        fmse: best,
        trace,
    })
}

/// Minimizes a unimodal `f` on `[lo, hi]`, shrinking the bracket `iterations`
/// times. Returns `(x_min, f(x_min))`.
pub fn golden_section_minimize(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    iterations: usize,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iterations {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterKind;
    use crate::synth::generate_composite;

    fn brightness_case() -> (Image, Mask, FilterPipeline) {
        let natural = Image::from_fn(8, 8, |x, y| {
            [0.1 + 0.08 * x as f64, 0.15 + 0.07 * y as f64, 0.35]
        })
        .unwrap();
        let mask = Mask::from_fn(8, 8, |x, y| if x + y >= 6 { 1.0 } else { 0.0 }).unwrap();
        (natural, mask, FilterPipeline::new(vec![FilterKind::Brightness]).unwrap())
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section_minimize(|x| (x - 0.3) * (x - 0.3) + 1.0, -1.0, 1.0, 40);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-10);
    }

    #[test]
    fn perfect_start_stays_put() {
        let (natural, mask, _) = brightness_case();
        let p = FilterPipeline::default_six();
        let r = fit_gradient(&natural, &mask, &natural, &p, 20, 1.0).unwrap();
        assert_eq!(r.args, ArgVector::zeros(6));
        assert_eq!(r.fmse, 0.0);
    }

    #[test]
    fn recovers_brightness_inverse() {
        let (natural, mask, p) = brightness_case();
        let s = generate_composite(&natural, &mask, &p, &ArgVector::new(vec![0.3]).unwrap())
            .unwrap();
        assert_eq!(s.clipped_components, 0);
        let g = fit_gradient(&s.composite, &mask, &natural, &p, 500, 2.0).unwrap();
        assert!((g.args.values()[0] + 0.3).abs() < 1e-3, "{:?}", g.args);
        let c = fit_coordinate(&s.composite, &mask, &natural, &p, 2).unwrap();
        assert!((c.args.values()[0] + 0.3).abs() < 1e-3, "{:?}", c.args);
    }

    #[test]
    fn coordinate_rounds_never_increase() {
        let (natural, mask, _) = brightness_case();
        let p = FilterPipeline::default_six();
        let xi = ArgVector::new(vec![0.2, -0.1, 0.15, 0.1, -0.2, 0.1]).unwrap();
        let s = generate_composite(&natural, &mask, &p, &xi).unwrap();
        let r = fit_coordinate(&s.composite, &mask, &natural, &p, 6).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(r.fmse < r.trace[0].1);
    }

    #[test]
    fn preconditions() {
        let (natural, mask, p) = brightness_case();
        assert!(fit_coordinate(&natural, &mask, &natural, &p, 0).is_err());
        assert!(fit_gradient(&natural, &mask, &natural, &p, 0, 1.0).is_err());
        let small = Image::filled(4, 4, [0.5; 3]).unwrap();
        assert!(fit_gradient(&natural, &mask, &small, &p, 5, 1.0).is_err());
    }
}
