//! Float rasters: RGB images, foreground masks and gradient buffers.
//!
//! All rasters are row-major. Images store interleaved `(R, G, B)` triples with
//! every component in `[0, 1]`; masks store one weight per pixel in `[0, 1]`.

use crate::error::{domain, Result};

/// Dense RGB raster with components in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(domain!("image must be non-empty, got {width}x{height}"));
        }
        if data.len() != width * height * 3 {
            return Err(domain!(
                "image data length {} does not match {width}x{height}x3",
                data.len()
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(domain!("image component {v} outside [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(width, height, rgb.repeat(width * height))
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub(crate) fn ensure_same_dims(&self, other: &Image, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(domain!(
                "{what}: image dimensions {:?} and {:?} differ",
                self.dims(),
                other.dims()
            ));
        }
        Ok(())
    }

    pub(crate) fn ensure_mask_dims(&self, mask: &Mask, what: &str) -> Result<()> {
        if self.dims() != mask.dims() {
            return Err(domain!(
                "{what}: image dimensions {:?} and mask dimensions {:?} differ",
                self.dims(),
                mask.dims()
            ));
        }
        Ok(())
    }

    /// Bilinear resampling with pixel-centre alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 {
            return Err(domain!("resize target must be non-empty"));
        }
        let data = resize_bilinear(&self.data, self.width, self.height, 3, width, height);
        Ok(Image::from_raw(width, height, data))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Image> {
        if factor == 0 {
            return Err(domain!("upsampling factor must be positive"));
        }
        let data = upsample_nearest(&self.data, self.width, self.height, 3, factor);
        Ok(Image::from_raw(self.width * factor, self.height * factor, data))
    }

    /// Keeps the top-left pixel of every `factor`×`factor` block; inverse of
    /// [`Image::upsample_nearest`].
    pub fn downsample_nearest(&self, factor: usize) -> Result<Image> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(domain!(
                "cannot downsample {}x{} by {factor}",
                self.width,
                self.height
            ));
        }
        let data = downsample_nearest(&self.data, self.width, self.height, 3, factor);
        Ok(Image::from_raw(self.width / factor, self.height / factor, data))
    }
}

/// Per-pixel foreground weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(domain!("mask must be non-empty, got {width}x{height}"));
        }
        if data.len() != width * height {
            return Err(domain!(
                "mask data length {} does not match {width}x{height}",
                data.len()
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(domain!("mask value {v} outside [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn weight(&self) -> f64 {
        self.data.iter().sum()
    }

    /// True when no pixel carries any foreground weight.
    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&m| m == 0.0)
    }

    pub(crate) fn ensure_nonempty(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            return Err(domain!("{what}: mask has no foreground"));
        }
        Ok(())
    }

    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Mask> {
        if width == 0 || height == 0 {
            return Err(domain!("resize target must be non-empty"));
        }
        let data = resize_bilinear(&self.data, self.width, self.height, 1, width, height);
        Ok(Mask {
            width,
            height,
            data,
        })
    }

    pub fn upsample_nearest(&self, factor: usize) -> Result<Mask> {
        if factor == 0 {
            return Err(domain!("upsampling factor must be positive"));
        }
        let data = upsample_nearest(&self.data, self.width, self.height, 1, factor);
        Ok(Mask {
            width: self.width * factor,
            height: self.height * factor,
            data,
        })
    }
}

/// Unbounded per-component buffer shaped like an [`Image`]; holds derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Gradient {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn zeros_like(image: &Image) -> Self {
        Self::zeros(image.width, image.height)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub(crate) fn ensure_matches(&self, image: &Image, what: &str) -> Result<()> {
        if self.dims() != image.dims() || self.data.len() != image.data.len() {
            return Err(domain!(
                "{what}: gradient shape {:?} does not match image {:?}",
                self.dims(),
                image.dims()
            ));
        }
        Ok(())
    }
}

fn resize_bilinear(
    src: &[f64],
    sw: usize,
    sh: usize,
    channels: usize,
    dw: usize,
    dh: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(dw * dh * channels);
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let tap = |coord: f64, len: usize| -> (usize, usize, f64) {
        let c = coord.clamp(0.0, (len - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, c - i0 as f64)
    };
    for y in 0..dh {
        let (y0, y1, fy) = tap((y as f64 + 0.5) * sy - 0.5, sh);
        for x in 0..dw {
            let (x0, x1, fx) = tap((x as f64 + 0.5) * sx - 0.5, sw);
            for c in 0..channels {
                let at = |xx: usize, yy: usize| src[(yy * sw + xx) * channels + c];
                let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * fx;
                let bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * fx;
                out.push((top + (bottom - top) * fy).clamp(0.0, 1.0));
            }
        }
    }
    out
}

fn upsample_nearest(src: &[f64], w: usize, h: usize, channels: usize, factor: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h * channels * factor * factor);
    for y in 0..h * factor {
        let row = &src[(y / factor) * w * channels..(y / factor + 1) * w * channels];
        for x in 0..w * factor {
            let sx = x / factor;
            out.extend_from_slice(&row[sx * channels..(sx + 1) * channels]);
        }
    }
    out
}

fn downsample_nearest(src: &[f64], w: usize, h: usize, channels: usize, factor: usize) -> Vec<f64> {
    let (dw, dh) = (w / factor, h / factor);
    let mut out = Vec::with_capacity(dw * dh * channels);
    for y in 0..dh {
        for x in 0..dw {
            let i = (y * factor * w + x * factor) * channels;
            out.extend_from_slice(&src[i..i + channels]);
        }
    }
    out
}
