//! The six parametric white-box filters.
//!
//! Every filter maps one pixel to one pixel under a scalar argument in
//! `[-1, 1]`, is the identity at argument 0, and clamps its output to
//! `[0, 1]`. Besides the forward map each filter provides the derivative of its
//! output with respect to the argument and the vector-Jacobian product with
//! respect to its input pixel, which is what backpropagation through a
//! pipeline needs.
//!
//! With `lum` the Rec.601 luminance of the input pixel:
//!
//! ```text
//! brightness   out = in · 2^a
//! contrast     out = in + a · (in − 0.5)
//! saturation   out = in + a · (in − lum)
//! temperature  out = in + a · (0.25, 0, −0.25)
//! highlight    out = in + a · lum
//! shadow       out = in + a · (1 − lum)
//! ```
//!
//! The additive forms make argument 0 reproduce the input bit for bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::image::{Gradient, Image};

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const TEMPERATURE_SHIFT: f64 = 0.25;

/// Luminance of an RGB triple.
///
/// Evaluated as `G + 0.299·(R − G) + 0.114·(B − G)`, which equals the weighted
/// sum exactly in real arithmetic and returns `g` bit for bit on gray pixels.
#[inline]
pub fn luminance(rgb: [f64; 3]) -> f64 {
    let [r, g, b] = rgb;
    g + LUMA_WEIGHTS[0] * (r - g) + LUMA_WEIGHTS[2] * (b - g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Brightness,
    Contrast,
    Saturation,
    Temperature,
    Highlight,
    Shadow,
}

impl FilterKind {
    /// All filters, in the default execution order.
    pub const ALL: [FilterKind; 6] = [
        FilterKind::Brightness,
        FilterKind::Contrast,
        FilterKind::Saturation,
        FilterKind::Temperature,
        FilterKind::Highlight,
        FilterKind::Shadow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Brightness => "brightness",
            FilterKind::Contrast => "contrast",
            FilterKind::Saturation => "saturation",
            FilterKind::Temperature => "temperature",
            FilterKind::Highlight => "highlight",
            FilterKind::Shadow => "shadow",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| domain!("unknown filter kind {s:?}"))
    }
}

pub(crate) fn check_arg(arg: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&arg) {
        return Err(domain!("filter argument {arg} outside [-1, 1]"));
    }
    Ok(())
}

/// A filter bound to an argument, with per-argument constants precomputed.
#[derive(Clone, Copy, Debug)]
pub struct BoundFilter {
    kind: FilterKind,
    arg: f64,
    gain: f64,
}

#[inline]
fn in_range(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl BoundFilter {
    pub fn new(kind: FilterKind, arg: f64) -> Result<Self> {
        check_arg(arg)?;
        Ok(Self::new_unchecked(kind, arg))
    }

    pub(crate) fn new_unchecked(kind: FilterKind, arg: f64) -> Self {
        let gain = match kind {
            FilterKind::Brightness => arg.exp2(),
            _ => 1.0,
        };
        Self { kind, arg, gain }
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn arg(&self) -> f64 {
        self.arg
    }

    /// Output before clamping.
    #[inline]
    pub fn raw(&self, px: [f64; 3]) -> [f64; 3] {
        let a = self.arg;
        match self.kind {
            FilterKind::Brightness => px.map(|v| v * self.gain),
            FilterKind::Contrast => px.map(|v| v + a * (v - 0.5)),
            FilterKind::Saturation => {
                let lum = luminance(px);
                px.map(|v| v + a * (v - lum))
            }
            FilterKind::Temperature => [
                px[0] + a * TEMPERATURE_SHIFT,
                px[1],
                px[2] - a * TEMPERATURE_SHIFT,
            ],
            FilterKind::Highlight => {
                let lum = luminance(px);
                px.map(|v| v + a * lum)
            }
            FilterKind::Shadow => {
                let lum = luminance(px);
                px.map(|v| v + a * (1.0 - lum))
            }
        }
    }

    #[inline]
    pub fn apply(&self, px: [f64; 3]) -> [f64; 3] {
        self.raw(px).map(|v| v.clamp(0.0, 1.0))
    }

    /// [`apply`](Self::apply) over planar RGB data, in place.
    pub fn apply_planes(&self, r: &mut [f64], g: &mut [f64], b: &mut [f64]) {
        #[inline(always)]
        fn each(r: &mut [f64], g: &mut [f64], b: &mut [f64], f: impl Fn([f64; 3]) -> [f64; 3]) {
            for ((r, g), b) in r.iter_mut().zip(g.iter_mut()).zip(b.iter_mut()) {
                [*r, *g, *b] = f([*r, *g, *b]);
            }
        }
        // one loop per kind so the kind dispatch folds out of the pixel loop
        let with = |kind| BoundFilter { kind, ..*self };
        match self.kind {
            FilterKind::Brightness => each(r, g, b, |p| with(FilterKind::Brightness).apply(p)),
            FilterKind::Contrast => each(r, g, b, |p| with(FilterKind::Contrast).apply(p)),
            FilterKind::Saturation => each(r, g, b, |p| with(FilterKind::Saturation).apply(p)),
            FilterKind::Temperature => each(r, g, b, |p| with(FilterKind::Temperature).apply(p)),
            FilterKind::Highlight => each(r, g, b, |p| with(FilterKind::Highlight).apply(p)),
            FilterKind::Shadow => each(r, g, b, |p| with(FilterKind::Shadow).apply(p)),
        }
    }

    /// `∂out/∂arg`, zero on clamped components.
    #[inline]
    pub fn arg_grad(&self, px: [f64; 3]) -> [f64; 3] {
        let raw = self.raw(px);
        let d = match self.kind {
            FilterKind::Brightness => px.map(|v| std::f64::consts::LN_2 * v * self.gain),
            FilterKind::Contrast => px.map(|v| v - 0.5),
            FilterKind::Saturation => {
                let lum = luminance(px);
                px.map(|v| v - lum)
            }
            FilterKind::Temperature => [TEMPERATURE_SHIFT, 0.0, -TEMPERATURE_SHIFT],
            FilterKind::Highlight => [luminance(px); 3],
            FilterKind::Shadow => [1.0 - luminance(px); 3],
        };
        [0, 1, 2].map(|c| if in_range(raw[c]) { d[c] } else { 0.0 })
    }

    /// `upstreamᵀ · ∂out/∂in` for one pixel, with clamped output rows zeroed.
    #[inline]
    pub fn input_vjp(&self, px: [f64; 3], upstream: [f64; 3]) -> [f64; 3] {
        let raw = self.raw(px);
        let u = [0, 1, 2].map(|c| if in_range(raw[c]) { upstream[c] } else { 0.0 });
        let a = self.arg;
        let total = u[0] + u[1] + u[2];
        match self.kind {
            FilterKind::Brightness => u.map(|v| v * self.gain),
            FilterKind::Contrast => u.map(|v| v * (1.0 + a)),
            FilterKind::Temperature => u,
            FilterKind::Saturation => {
                [0, 1, 2].map(|c| (1.0 + a) * u[c] - a * LUMA_WEIGHTS[c] * total)
            }
            FilterKind::Highlight => [0, 1, 2].map(|c| u[c] + a * LUMA_WEIGHTS[c] * total),
            FilterKind::Shadow => [0, 1, 2].map(|c| u[c] - a * LUMA_WEIGHTS[c] * total),
        }
    }

    /// True when any component of the unclamped output leaves `[0, 1]`.
    pub fn clamps(&self, px: [f64; 3]) -> [bool; 3] {
        self.raw(px).map(|v| !in_range(v))
    }
}

/// Applies one filter to every pixel.
pub fn apply_filter(image: &Image, kind: FilterKind, arg: f64) -> Result<Image> {
    let f = BoundFilter::new(kind, arg)?;
    Ok(map_pixels(image, |px| f.apply(px)))
}

/// Per-component derivative of [`apply_filter`] with respect to its argument.
pub fn filter_arg_grad(image: &Image, kind: FilterKind, arg: f64) -> Result<Gradient> {
    let f = BoundFilter::new(kind, arg)?;
    let mut data = Vec::with_capacity(image.data().len());
    for px in image.pixels() {
        data.extend_from_slice(&f.arg_grad(px));
    }
    Ok(Gradient {
        width: image.width(),
        height: image.height(),
        data,
    })
}

/// Pulls an output-side gradient back through one filter to its input.
pub fn filter_input_jvp(
    image: &Image,
    kind: FilterKind,
    arg: f64,
    upstream: &Gradient,
) -> Result<Gradient> {
    let f = BoundFilter::new(kind, arg)?;
    upstream.ensure_matches(image, "filter_input_jvp")?;
    let mut data = Vec::with_capacity(image.data().len());
    for (px, up) in image.pixels().zip(upstream.data.chunks_exact(3)) {
        data.extend_from_slice(&f.input_vjp(px, [up[0], up[1], up[2]]));
    }
    Ok(Gradient {
        width: image.width(),
        height: image.height(),
        data,
    })
}

pub(crate) fn map_pixels(image: &Image, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Image {
    let mut data = Vec::with_capacity(image.data().len());
    for px in image.pixels() {
        data.extend_from_slice(&f(px));
    }
    Image::from_raw(image.width(), image.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(rgb: [f64; 3]) -> Image {
        Image::new(1, 1, rgb.to_vec()).unwrap()
    }

    #[test]
    fn luminance_examples() {
        assert_eq!(luminance([1.0, 1.0, 1.0]), 1.0);
        assert_eq!(luminance([0.0, 0.0, 0.0]), 0.0);
        assert!((luminance([1.0, 0.0, 0.0]) - 0.299).abs() < 1e-15);
        assert!((luminance([0.0, 1.0, 0.0]) - 0.587).abs() < 1e-15);
        assert!((luminance([0.0, 0.0, 1.0]) - 0.114).abs() < 1e-15);
    }

    #[test]
    fn brightness_doubles_at_one() {
        let out = apply_filter(&single([0.25; 3]), FilterKind::Brightness, 1.0).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn brightness_clamps() {
        let out = apply_filter(&single([0.8; 3]), FilterKind::Brightness, 1.0).unwrap();
        assert_eq!(out.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn saturation_leaves_gray() {
        for &g in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            for &a in &[-1.0, -0.4, 0.3, 1.0] {
                let out = apply_filter(&single([g; 3]), FilterKind::Saturation, a).unwrap();
                assert_eq!(out.data(), &[g, g, g]);
            }
        }
    }

    #[test]
    fn shadow_round_trip_is_asymmetric() {
        let once = apply_filter(&single([0.8; 3]), FilterKind::Shadow, -0.7).unwrap();
        assert!((once.data()[0] - 0.66).abs() < 1e-12);
        let twice = apply_filter(&once, FilterKind::Shadow, 0.7).unwrap();
        assert!((twice.data()[0] - 0.898).abs() < 1e-12);
    }

    #[test]
    fn temperature_shifts_red_and_blue() {
        let out = apply_filter(&single([0.5; 3]), FilterKind::Temperature, 0.4).unwrap();
        let d = out.data();
        assert!((d[0] - 0.6).abs() < 1e-15);
        assert_eq!(d[1], 0.5);
        assert!((d[2] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_argument_is_rejected() {
        let img = single([0.5; 3]);
        for kind in FilterKind::ALL {
            assert!(apply_filter(&img, kind, 1.0001).is_err());
            assert!(apply_filter(&img, kind, f64::NAN).is_err());
            assert!(filter_arg_grad(&img, kind, -1.5).is_err());
        }
    }

    #[test]
    fn arg_grad_examples() {
        let g = filter_arg_grad(&single([0.25; 3]), FilterKind::Brightness, 0.0).unwrap();
        assert!((g.data[0] - std::f64::consts::LN_2 * 0.25).abs() < 1e-15);
        assert!((g.data[0] - 0.1733).abs() < 1e-4);
        for a in [-0.9, 0.0, 0.6] {
            let g = filter_arg_grad(&single([0.5; 3]), FilterKind::Contrast, a).unwrap();
            assert_eq!(g.data, vec![0.0; 3]);
        }
        // 0.8 · 2 = 1.6 is clamped
        let g = filter_arg_grad(&single([0.8; 3]), FilterKind::Brightness, 1.0).unwrap();
        assert_eq!(g.data, vec![0.0; 3]);
        let g = filter_arg_grad(&single([0.9, 0.5, 0.1]), FilterKind::Temperature, 0.8).unwrap();
        assert_eq!(g.data, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn jvp_identity_cases() {
        let img = Image::from_fn(3, 2, |x, y| [0.1 + 0.2 * x as f64, 0.3 + 0.1 * y as f64, 0.6])
            .unwrap();
        let up = Gradient {
            width: 3,
            height: 2,
            data: (0..18).map(|i| (i as f64 * 0.37).sin()).collect(),
        };
        for kind in FilterKind::ALL {
            let out = filter_input_jvp(&img, kind, 0.0, &up).unwrap();
            for (a, b) in out.data.iter().zip(&up.data) {
                assert!((a - b).abs() < 1e-15, "{kind}");
            }
        }
        let out = filter_input_jvp(&img, FilterKind::Temperature, 0.3, &up).unwrap();
        assert_eq!(out.data, up.data);
        let dark = Image::filled(3, 2, [0.2, 0.3, 0.4]).unwrap();
        let out = filter_input_jvp(&dark, FilterKind::Brightness, 1.0, &up).unwrap();
        for (a, b) in out.data.iter().zip(&up.data) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn jvp_rejects_shape_mismatch() {
        let img = Image::filled(2, 2, [0.5; 3]).unwrap();
        let up = Gradient::zeros(3, 2);
        assert!(filter_input_jvp(&img, FilterKind::Shadow, 0.1, &up).is_err());
    }

    #[test]
    fn jvp_matches_finite_differences() {
        let px = [0.31, 0.52, 0.67];
        let up = [0.7, -0.4, 1.3];
        let h = 1e-6;
        for kind in FilterKind::ALL {
            let f = BoundFilter::new(kind, 0.35).unwrap();
            let vjp = f.input_vjp(px, up);
            for j in 0..3 {
                let mut plus = px;
                let mut minus = px;
                plus[j] += h;
                minus[j] -= h;
                let (op, om) = (f.raw(plus), f.raw(minus));
                let fd: f64 = (0..3).map(|c| up[c] * (op[c] - om[c]) / (2.0 * h)).sum();
                assert!((fd - vjp[j]).abs() < 1e-8, "{kind} component {j}: {fd} vs {}", vjp[j]);
            }
        }
    }

    #[test]
    fn kind_parses_case_insensitively() {
        assert_eq!("Shadow".parse::<FilterKind>().unwrap(), FilterKind::Shadow);
        assert!("vignette".parse::<FilterKind>().is_err());
    }
}
