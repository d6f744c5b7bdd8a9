//! 8-bit image and mask files: PNG, binary PPM (colour) and PGM (masks).

use std::path::Path;

use anyhow::{bail, Context, Result};
use image::{GrayImage, ImageReader, RgbImage};
use whitebox_core::{Image, Mask};

/// Loads an RGB image; alpha and 16-bit depth are reduced to 8-bit RGB.
pub fn load_image(path: &Path) -> Result<Image> {
    let rgb = decode(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    Image::new(w as usize, h as usize, data)
        .with_context(|| format!("{}: invalid image", path.display()))
}

pub fn save_image(image: &Image, path: &Path) -> Result<()> {
    let (w, h) = image.dims();
    let bytes = image.data().iter().map(|&v| quantize(v)).collect();
    let buf = RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches dimensions");
    write_parent(path)?;
    buf.save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Loads a mask from a grayscale file; colour files are converted to luma.
pub fn load_mask(path: &Path) -> Result<Mask> {
    let gray = decode(path)?.to_luma8();
    let (w, h) = gray.dimensions();
    let data = gray.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    Mask::new(w as usize, h as usize, data)
        .with_context(|| format!("{}: invalid mask", path.display()))
}

pub fn save_mask(mask: &Mask, path: &Path) -> Result<()> {
    let (w, h) = mask.dims();
    let bytes = mask.data().iter().map(|&v| quantize(v)).collect();
    let buf = GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches dimensions");
    write_parent(path)?;
    buf.save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}

/// `round(v · 255)`, the byte stored for a component in `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// The image a save/load round trip yields.
pub fn quantized(image: &Image) -> Image {
    let (w, h) = image.dims();
    let data = image
        .data()
        .iter()
        .map(|&v| f64::from(quantize(v)) / 255.0)
        .collect();
    Image::new(w, h, data).expect("quantized values stay in range")
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    let reader = ImageReader::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?
        .with_guessed_format()
        .with_context(|| format!("cannot read {}", path.display()))?;
    if reader.format().is_none() {
        bail!("{}: unrecognized image format", path.display());
    }
    reader
        .decode()
        .with_context(|| format!("cannot decode {}", path.display()))
}

fn write_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}
